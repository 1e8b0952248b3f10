#include "ncdeon/dataset.hpp"

#include <cstring>

#include "ncdeon/container.hpp"

namespace ncdeon {

void OperatorDataset::validate() const {
  int N = n_samples();
  if (N == 0) throw value_error("dataset: no samples");
  int n_obs = signals[0].n_obs();
  int d_in = signals[0].d_in();
  for (int i = 0; i < N; ++i) {
    if (signals[i].n_obs() != n_obs || signals[i].d_in() != d_in)
      throw value_error(strf("dataset: signal %d has shape (%d,%d), expected "
                             "(%d,%d)", i, signals[i].n_obs(), signals[i].d_in(),
                             n_obs, d_in));
  }
  if (query_points.rank() != 2 || query_points.dim(1) != 2)
    throw value_error("dataset: query_points must be (P,2), got " +
                      shape_str(query_points));
  if (targets.rank() != 2 || targets.dim(0) != N || targets.numel() != (long long)N * target_cols())
    throw value_error(strf("dataset: targets must be (%d,%lld), got ", N,
                           target_cols()) + shape_str(targets));
  if ((int)norm_in.size() != d_in || (int)norm_out.size() != c)
    throw value_error("dataset: normalization constant count mismatch");
  for (double v : norm_in)
    if (!(v > 0)) throw value_error("dataset: non-positive input normalization");
  for (double v : norm_out)
    if (!(v > 0)) throw value_error("dataset: non-positive output normalization");
  if (!(time_scale > 0)) throw value_error("dataset: non-positive time scale");
}

void save_dataset(const OperatorDataset& ds, const std::string& path) {
  ds.validate();
  int N = ds.n_samples();
  int n_obs = ds.signals[0].n_obs();
  int d_in = ds.signals[0].d_in();
  Container c;
  c.magic = kDatasetMagic;
  c.set_meta("n_samples", std::to_string(N));
  c.set_meta("n_obs", std::to_string(n_obs));
  c.set_meta("d_in", std::to_string(d_in));
  c.set_meta("n_points", std::to_string(ds.n_points()));
  c.set_meta("n_times", std::to_string(ds.n_times()));
  c.set_meta("channels", std::to_string(ds.c));
  c.set_meta("time_offset", dbl_str(ds.time_offset));
  c.set_meta("time_scale", dbl_str(ds.time_scale));
  for (auto& [k, v] : ds.meta) c.set_meta("x." + k, v);

  Tensor st({N, n_obs});
  Tensor sv({N, n_obs, d_in});
  for (int i = 0; i < N; ++i) {
    std::memcpy(st.data() + (long long)i * n_obs, ds.signals[i].times.data(),
                n_obs * sizeof(double));
    std::memcpy(sv.data() + (long long)i * n_obs * d_in,
                ds.signals[i].values.data(), (long long)n_obs * d_in * sizeof(double));
  }
  c.add_array("signal_times", std::move(st));
  c.add_array("signal_values", std::move(sv));
  c.add_array("query_points", ds.query_points);
  Tensor qt({ds.n_times()});
  std::memcpy(qt.data(), ds.query_times.data(), ds.n_times() * sizeof(double));
  c.add_array("query_times", std::move(qt));
  c.add_array("targets", ds.targets);
  Tensor ni({(int)ds.norm_in.size()});
  std::memcpy(ni.data(), ds.norm_in.data(), ds.norm_in.size() * sizeof(double));
  c.add_array("norm_in", std::move(ni));
  Tensor no({(int)ds.norm_out.size()});
  std::memcpy(no.data(), ds.norm_out.data(), ds.norm_out.size() * sizeof(double));
  c.add_array("norm_out", std::move(no));
  c.save(path);
}

OperatorDataset load_dataset(const std::string& path) {
  Container c = Container::load(path, kDatasetMagic);
  OperatorDataset ds;
  int N = (int)c.meta_int("n_samples");
  int n_obs = (int)c.meta_int("n_obs");
  int d_in = (int)c.meta_int("d_in");
  ds.c = (int)c.meta_int("channels");
  ds.time_offset = c.meta_num("time_offset");
  ds.time_scale = c.meta_num("time_scale");
  for (auto& [k, v] : c.meta)
    if (k.rfind("x.", 0) == 0) ds.meta[k.substr(2)] = v;

  const Tensor& st = c.array("signal_times");
  const Tensor& sv = c.array("signal_values");
  if (st.rank() != 2 || st.dim(0) != N || st.dim(1) != n_obs)
    throw io_error("dataset '" + path + "': signal_times shape mismatch");
  if (sv.rank() != 3 || sv.dim(0) != N || sv.dim(1) != n_obs || sv.dim(2) != d_in)
    throw io_error("dataset '" + path + "': signal_values shape mismatch");
  for (int i = 0; i < N; ++i) {
    TimeSeriesSignal s;
    s.times.assign(st.data() + (long long)i * n_obs,
                   st.data() + (long long)(i + 1) * n_obs);
    s.values = Tensor({n_obs, d_in});
    std::memcpy(s.values.data(), sv.data() + (long long)i * n_obs * d_in,
                (long long)n_obs * d_in * sizeof(double));
    ds.signals.push_back(std::move(s));
  }
  ds.query_points = c.array("query_points");
  const Tensor& qt = c.array("query_times");
  ds.query_times.assign(qt.data(), qt.data() + qt.numel());
  ds.targets = c.array("targets");
  const Tensor& ni = c.array("norm_in");
  ds.norm_in.assign(ni.data(), ni.data() + ni.numel());
  const Tensor& no = c.array("norm_out");
  ds.norm_out.assign(no.data(), no.data() + no.numel());
  ds.validate();
  return ds;
}

}  // namespace ncdeon
