#include "ncdeon/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "json.hpp"

namespace ncdeon {

double relative_l2(const Tensor& pred, const Tensor& ref) {
  if (pred.numel() != ref.numel())
    throw value_error("relative_l2: size mismatch " + shape_str(pred) + " vs " +
                      shape_str(ref));
  double num = 0, den = 0;
  for (long long i = 0; i < pred.numel(); ++i) {
    double d = pred[i] - ref[i];
    num += d * d;
    den += ref[i] * ref[i];
  }
  if (den == 0.0)
    throw value_error("relative_l2: reference field has zero norm");
  return std::sqrt(num / den);
}

double percentile(std::vector<double> vals, double p) {
  if (vals.empty()) throw value_error("percentile: empty sample");
  if (p < 0 || p > 100) throw value_error("percentile: p outside [0,100]");
  std::sort(vals.begin(), vals.end());
  double pos = p / 100.0 * (vals.size() - 1);
  size_t lo = (size_t)pos;
  if (lo + 1 >= vals.size()) return vals.back();
  double frac = pos - lo;
  return vals[lo] * (1.0 - frac) + vals[lo + 1] * frac;
}

namespace {

// predictions for one sample over the full stored query grid, normalized
// units, laid out like a target row (t-major)
Tensor predict_full(const OperatorModel& m, const OperatorDataset& ds,
                    const ControlPath& path, const SolverConfig& cfg,
                    const Tensor& trunk_feats) {
  int T = ds.n_times(), P = ds.n_points(), c = ds.c;
  if (m.trunk_mode == TrunkMode::Spacetime) {
    Tensor brow;
    if (m.kind == ModelKind::Ncde) {
      auto r = ncde_forward(m.ncde, path, cfg);
      Tensor z({1, (int)r.zT.numel()});
      std::memcpy(z.data(), r.zT.data(), r.zT.numel() * sizeof(double));
      brow = ops::matmul(z, m.head.W);
    } else {
      Tensor h = gru_forward(m.gru, path.values);
      Tensor hr({1, (int)h.numel()});
      std::memcpy(hr.data(), h.data(), h.numel() * sizeof(double));
      brow = ops::matmul(hr, m.head.W);
    }
    Tensor out = ops::donet_head(brow, trunk_feats, c, m.embed, trunk_feats.rows());
    out = ops::add_rowvec(out, m.beta);  // (T*P, c)
    Tensor row({1, (int)out.numel()});
    std::memcpy(row.data(), out.data(), out.numel() * sizeof(double));
    return row;
  }
  // spatial-only: latent trajectory at the grid times, then per-channel GEMM
  std::vector<Tensor> zs;
  ncde_forward(m.ncde, path, cfg, &ds.query_times, &zs);
  if ((int)zs.size() != T)
    throw numeric_error("predict_full: trajectory recording failed");
  Tensor Z({T, m.ncde.d});
  for (int t = 0; t < T; ++t)
    std::memcpy(Z.data() + (long long)t * m.ncde.d, zs[t].data(),
                m.ncde.d * sizeof(double));
  Tensor Bc = ops::matmul(Z, m.head.W);  // (T, c*embed)
  Tensor row({1, T * P * c});
  for (int k = 0; k < c; ++k) {
    Tensor bk = c == 1 ? Bc : ops::slice_cols(Bc, k * m.embed, (k + 1) * m.embed);
    Tensor pk = ops::matmul_nt(bk, trunk_feats);  // (T, P)
    for (int t = 0; t < T; ++t)
      for (int p = 0; p < P; ++p)
        row[((long long)t * P + p) * c + k] = pk.at(t, p) + m.beta[k];
  }
  return row;
}

Tensor full_query_grid(const OperatorDataset& ds, bool spacetime) {
  int T = ds.n_times(), P = ds.n_points();
  if (!spacetime) return ds.query_points;
  Tensor Q({T * P, 3});
  for (int t = 0; t < T; ++t)
    for (int p = 0; p < P; ++p) {
      Q.at(t * P + p, 0) = ds.query_points.at(p, 0);
      Q.at(t * P + p, 1) = ds.query_points.at(p, 1);
      Q.at(t * P + p, 2) = ds.query_times[t];
    }
  return Q;
}

void denormalize(Tensor& row, const std::vector<double>& norm, int c) {
  for (long long i = 0; i < row.numel(); ++i) row[i] *= norm[i % c];
}

void fill_stats(ErrorReport& r) {
  double s = 0;
  for (double v : r.per_sample) s += v;
  r.mean = s / r.per_sample.size();
  for (size_t i = 0; i < kReportPcts.size(); ++i)
    r.pct[i] = percentile(r.per_sample, kReportPcts[i]);
  r.median = r.pct[3];
}

}  // namespace

ErrorReport error_report(const OperatorModel& m, const OperatorDataset& ds,
                         const SolverConfig& solver, int threads) {
  ds.validate();
  if (m.kind == ModelKind::Gru && m.trunk_mode == TrunkMode::Spatial)
    throw value_error("error_report: spatial-only trunk requires the NCDE branch");
  int N = ds.n_samples(), c = ds.c;
  bool st = m.trunk_mode == TrunkMode::Spacetime;
  Tensor feats = trunk_features(m.trunk, full_query_grid(ds, st));

  ErrorReport rep;
  rep.per_sample.assign(N, 0.0);
  parallel_for(N, threads, [&](int i) {
    ControlPath path = build_path(ds.signals[i]);
    Tensor pred = predict_full(m, ds, path, solver, feats);
    Tensor ref({1, (int)ds.target_cols()});
    std::memcpy(ref.data(), ds.targets.data() + (long long)i * ds.target_cols(),
                ds.target_cols() * sizeof(double));
    denormalize(pred, ds.norm_out, c);
    denormalize(ref, ds.norm_out, c);
    rep.per_sample[i] = relative_l2(pred, ref);
  });
  fill_stats(rep);
  return rep;
}

TimeSeriesSignal resample_signal(const TimeSeriesSignal& sig, double factor) {
  if (factor == 1.0) return sig;
  if (factor != 0.5 && factor != 2.0)
    throw value_error(strf(
        "resample_signal: factor %.17g unsupported (0.5, 1.0, 2.0)", factor));
  int n = sig.n_obs(), d = sig.d_in();
  if (n < 2) throw value_error("resample_signal: need at least 2 observations");
  TimeSeriesSignal out;
  if (factor == 0.5) {
    std::vector<int> keep;
    for (int k = 0; k < n; k += 2) keep.push_back(k);
    if (keep.back() != n - 1) keep.push_back(n - 1);
    out.times.resize(keep.size());
    out.values = Tensor({(int)keep.size(), d});
    for (size_t k = 0; k < keep.size(); ++k) {
      out.times[k] = sig.times[keep[k]];
      std::memcpy(out.values.data() + (long long)k * d,
                  sig.values.data() + (long long)keep[k] * d, d * sizeof(double));
    }
    return out;
  }
  // factor 2: Hermite midpoints between consecutive knots
  ControlPath path = build_path(sig);
  int nn = 2 * n - 1;
  out.times.resize(nn);
  out.values = Tensor({nn, d});
  dvec buf(d + 1, 0.0);
  for (int k = 0; k < n; ++k) {
    out.times[2 * k] = sig.times[k];
    std::memcpy(out.values.data() + (long long)(2 * k) * d,
                sig.values.data() + (long long)k * d, d * sizeof(double));
    if (k + 1 < n) {
      double tm = 0.5 * (sig.times[k] + sig.times[k + 1]);
      out.times[2 * k + 1] = tm;
      path.eval(tm, buf.data());
      std::memcpy(out.values.data() + (long long)(2 * k + 1) * d, buf.data(),
                  d * sizeof(double));
    }
  }
  return out;
}

ResampleReport resolution_experiment(const OperatorModel& m,
                                     const OperatorDataset& ds,
                                     const SolverConfig& solver, double tol,
                                     int threads) {
  ds.validate();
  if (m.kind != ModelKind::Ncde)
    throw value_error(
        "resolution_experiment: requires the NCDE branch; the GRU baseline "
        "consumes a fixed-length value sequence and cannot absorb a change "
        "of sampling rate");
  int N = ds.n_samples(), c = ds.c;
  bool st = m.trunk_mode == TrunkMode::Spacetime;
  Tensor feats = trunk_features(m.trunk, full_query_grid(ds, st));

  ResampleReport rep;
  rep.tol = tol;
  rep.disc_half.assign(N, 0.0);
  rep.disc_double.assign(N, 0.0);
  rep.knots_native = ds.signals[0].n_obs();
  rep.knots_half = (int)resample_signal(ds.signals[0], 0.5).times.size();
  rep.knots_double = (int)resample_signal(ds.signals[0], 2.0).times.size();

  parallel_for(N, threads, [&](int i) {
    Tensor base = predict_full(m, ds, build_path(ds.signals[i]), solver, feats);
    denormalize(base, ds.norm_out, c);
    for (double f : {0.5, 2.0}) {
      TimeSeriesSignal rs = resample_signal(ds.signals[i], f);
      Tensor pred = predict_full(m, ds, build_path(rs), solver, feats);
      denormalize(pred, ds.norm_out, c);
      double d = relative_l2(pred, base);
      (f == 0.5 ? rep.disc_half : rep.disc_double)[i] = d;
    }
  });
  int ok_h = 0, ok_d = 0;
  for (int i = 0; i < N; ++i) {
    if (rep.disc_half[i] <= tol) ++ok_h;
    if (rep.disc_double[i] <= tol) ++ok_d;
  }
  rep.frac_ok_half = (double)ok_h / N;
  rep.frac_ok_double = (double)ok_d / N;
  return rep;
}

std::string error_report_text(const ErrorReport& r) {
  std::ostringstream os;
  os << "samples " << r.per_sample.size() << "\n";
  os << "mean_rel_l2 " << dbl_str(r.mean) << "\n";
  os << "median_rel_l2 " << dbl_str(r.median) << "\n";
  for (size_t i = 0; i < kReportPcts.size(); ++i)
    os << "p" << kReportPcts[i] << " " << dbl_str(r.pct[i]) << "\n";
  os << "per_sample\n";
  for (size_t i = 0; i < r.per_sample.size(); ++i)
    os << i << " " << dbl_str(r.per_sample[i]) << "\n";
  return os.str();
}

std::string error_report_json(const ErrorReport& r) {
  nlohmann::ordered_json j;
  j["samples"] = r.per_sample.size();
  j["mean_rel_l2"] = r.mean;
  j["median_rel_l2"] = r.median;
  nlohmann::ordered_json pct;
  for (size_t i = 0; i < kReportPcts.size(); ++i)
    pct[strf("p%g", kReportPcts[i])] = r.pct[i];
  j["percentiles"] = pct;
  j["per_sample"] = r.per_sample;
  return j.dump(2) + "\n";
}

std::string resample_report_text(const ResampleReport& r) {
  std::ostringstream os;
  os << "samples " << r.disc_half.size() << "\n";
  os << "knots_half " << r.knots_half << "\n";
  os << "knots_native " << r.knots_native << "\n";
  os << "knots_double " << r.knots_double << "\n";
  os << "tol " << dbl_str(r.tol) << "\n";
  os << "frac_ok_half " << dbl_str(r.frac_ok_half) << "\n";
  os << "frac_ok_double " << dbl_str(r.frac_ok_double) << "\n";
  os << "per_sample_half_double\n";
  for (size_t i = 0; i < r.disc_half.size(); ++i)
    os << i << " " << dbl_str(r.disc_half[i]) << " " << dbl_str(r.disc_double[i])
       << "\n";
  return os.str();
}

std::string resample_report_json(const ResampleReport& r) {
  nlohmann::ordered_json j;
  j["samples"] = r.disc_half.size();
  j["knots_half"] = r.knots_half;
  j["knots_native"] = r.knots_native;
  j["knots_double"] = r.knots_double;
  j["tol"] = r.tol;
  j["frac_ok_half"] = r.frac_ok_half;
  j["frac_ok_double"] = r.frac_ok_double;
  j["disc_half"] = r.disc_half;
  j["disc_double"] = r.disc_double;
  return j.dump(2) + "\n";
}

}  // namespace ncdeon
