#include "ncdeon/checkpoint.hpp"

#include <cstring>

#include "ncdeon/container.hpp"

namespace ncdeon {

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  Container c;
  c.magic = kCheckpointMagic;
  const ModelSpec& ms = ck.spec;
  c.set_meta("model", ms.kind == ModelKind::Ncde ? "ncde" : "gru");
  c.set_meta("trunk", ms.trunk_mode == TrunkMode::Spacetime ? "spacetime" : "spatial");
  c.set_meta("d_in", std::to_string(ms.d_in));
  c.set_meta("channels", std::to_string(ms.c));
  c.set_meta("latent", std::to_string(ms.latent));
  c.set_meta("width", std::to_string(ms.width));
  c.set_meta("depth", std::to_string(ms.depth));
  c.set_meta("embed", std::to_string(ms.embed));
  c.set_meta("seed", std::to_string(ck.seed));
  c.set_meta("time_offset", dbl_str(ck.time_offset));
  c.set_meta("time_scale", dbl_str(ck.time_scale));
  c.set_meta("solver", method_to_string(ck.solver.method));
  c.set_meta("rtol", dbl_str(ck.solver.rtol));
  c.set_meta("atol", dbl_str(ck.solver.atol));
  c.set_meta("max_steps", std::to_string(ck.solver.max_steps));
  c.set_meta("n_steps", std::to_string(ck.solver.n_steps));
  c.set_meta("grad", ck.grad_mode);
  c.set_meta("final_train_loss", dbl_str(ck.final_train_loss));

  auto vec_arr = [&](const char* name, const std::vector<double>& v) {
    Tensor t({(int)v.size()});
    std::memcpy(t.data(), v.data(), v.size() * sizeof(double));
    c.add_array(name, std::move(t));
  };
  vec_arr("norm_in", ck.norm_in);
  vec_arr("norm_out", ck.norm_out);
  vec_arr("train_times", ck.train_times);

  // param enumeration order is fixed, so the header is reproducible
  OperatorModel& m = const_cast<OperatorModel&>(ck.model);
  for (auto& np : named_params(m)) c.add_array("p." + np.name, *np.t);
  c.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Container c = Container::load(path, kCheckpointMagic);
  Checkpoint ck;
  ModelSpec& ms = ck.spec;
  const std::string& kind = c.get_meta("model");
  if (kind == "ncde")
    ms.kind = ModelKind::Ncde;
  else if (kind == "gru")
    ms.kind = ModelKind::Gru;
  else
    throw io_error("checkpoint '" + path + "': unknown model kind '" + kind + "'");
  const std::string& trunk = c.get_meta("trunk");
  if (trunk == "spacetime")
    ms.trunk_mode = TrunkMode::Spacetime;
  else if (trunk == "spatial")
    ms.trunk_mode = TrunkMode::Spatial;
  else
    throw io_error("checkpoint '" + path + "': unknown trunk mode '" + trunk + "'");
  ms.d_in = (int)c.meta_int("d_in");
  ms.c = (int)c.meta_int("channels");
  ms.latent = (int)c.meta_int("latent");
  ms.width = (int)c.meta_int("width");
  ms.depth = (int)c.meta_int("depth");
  ms.embed = (int)c.meta_int("embed");
  ck.seed = (uint64_t)c.meta_int("seed");
  ck.time_offset = c.meta_num("time_offset");
  ck.time_scale = c.meta_num("time_scale");
  ck.solver.method = method_from_string(c.get_meta("solver"));
  ck.solver.rtol = c.meta_num("rtol");
  ck.solver.atol = c.meta_num("atol");
  ck.solver.max_steps = (int)c.meta_int("max_steps");
  ck.solver.n_steps = (int)c.meta_int("n_steps");
  ck.grad_mode = c.get_meta("grad");
  ck.final_train_loss = c.meta_num("final_train_loss");

  auto arr_vec = [&](const char* name, std::vector<double>& v) {
    const Tensor& t = c.array(name);
    v.assign(t.data(), t.data() + t.numel());
  };
  arr_vec("norm_in", ck.norm_in);
  arr_vec("norm_out", ck.norm_out);
  arr_vec("train_times", ck.train_times);

  std::mt19937_64 dummy(0);
  ck.model = make_model(ms, dummy);
  for (auto& np : named_params(ck.model)) {
    const Tensor& src = c.array("p." + np.name);
    if (!src.same_shape(*np.t))
      throw io_error("checkpoint '" + path + "': parameter '" + np.name +
                     "' has shape " + shape_str(src) + ", expected " +
                     shape_str(*np.t));
    *np.t = src;
  }
  return ck;
}

}  // namespace ncdeon
