// ncdeon: neural-CDE operator learning pipeline
//   generate  sample boundary signals, solve the transient Poisson problem,
//             write train/test dataset files
//   train     fit an NCDE- or GRU-branch DeepONet, write a checkpoint
//   eval      full-grid relative-L2 report for a checkpoint on a dataset
//   resample  input-resolution stability experiment (NCDE only)
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "ncdeon/checkpoint.hpp"
#include "ncdeon/config.hpp"
#include "ncdeon/evaluation.hpp"
#include "ncdeon/pde_data.hpp"
#include "ncdeon/train.hpp"

using namespace ncdeon;

namespace {

void write_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  f << body;
  if (!f) throw io_error("write failed for '" + path + "'");
}

const std::set<std::string> kGenerateKeys = {
    "n_train", "n_test", "seed", "threads", "family", "max_modes", "band_lo",
    "band_hi", "knots_min", "knots_max", "amplitude", "nx", "ny", "t_end",
    "n_saves", "substeps", "cg_tol"};
const std::set<std::string> kTrainKeys = {
    "seed", "threads", "epochs", "batch_size", "lr_init", "lr_final",
    "warmup_frac", "queries_per_sample", "chunk", "solver", "grad", "model",
    "trunk", "latent", "width", "depth", "embed", "tape_steps", "rtol", "atol",
    "max_steps"};
const std::set<std::string> kEvalKeys = {"threads", "rtol", "atol", "max_steps",
                                         "solver", "tape_steps"};
const std::set<std::string> kResampleKeys = {"threads", "rtol", "atol",
                                             "max_steps", "solver",
                                             "tape_steps", "tol"};

struct CommonArgs {
  std::string config, out, data, ckpt;
  long long seed = -1;
  int threads = 0;  // 0 = not set
  bool json = false;
};

int run_generate(const CommonArgs& a, const Config& cfg) {
  cfg.ensure_known(kGenerateKeys);
  GenConfig gc;
  gc.n_train = (int)cfg.integer("n_train", 400);
  gc.n_test = (int)cfg.integer("n_test", 100);
  gc.seed = a.seed >= 0 ? (uint64_t)a.seed : (uint64_t)cfg.integer("seed", 2024);
  gc.threads = a.threads > 0 ? a.threads : (int)cfg.integer("threads", 1);
  gc.sig.family = cfg.str("family", "fourier");
  gc.sig.max_modes = (int)cfg.integer("max_modes", 5);
  gc.sig.band_lo = cfg.num("band_lo", 0.25);
  gc.sig.band_hi = cfg.num("band_hi", 2.0);
  gc.sig.knots_min = (int)cfg.integer("knots_min", 4);
  gc.sig.knots_max = (int)cfg.integer("knots_max", 10);
  gc.sig.amplitude = cfg.num("amplitude", 1.0);
  gc.pde.nx = (int)cfg.integer("nx", 32);
  gc.pde.ny = (int)cfg.integer("ny", 32);
  gc.pde.t_end = cfg.num("t_end", 2.0);
  gc.pde.n_saves = (int)cfg.integer("n_saves", 99);
  gc.pde.substeps = (int)cfg.integer("substeps", 4);
  gc.pde.cg_tol = cfg.num("cg_tol", 1e-10);

  std::filesystem::create_directories(a.out);
  auto [train_ds, test_ds] = build_dataset(gc);
  save_dataset(train_ds, a.out + "/poisson_train.ds");
  save_dataset(test_ds, a.out + "/poisson_test.ds");
  std::cout << "wrote " << a.out << "/poisson_train.ds ("
            << train_ds.n_samples() << " samples) and " << a.out
            << "/poisson_test.ds (" << test_ds.n_samples() << " samples)\n";
  return 0;
}

SolverConfig solver_from(const Config& cfg, const CommonArgs& a,
                         const SolverConfig& base) {
  SolverConfig sc = base;
  sc.method = method_from_string(cfg.str("solver", method_to_string(base.method)));
  sc.rtol = cfg.num("rtol", base.rtol);
  sc.atol = cfg.num("atol", base.atol);
  sc.max_steps = (int)cfg.integer("max_steps", base.max_steps);
  sc.n_steps = (int)cfg.integer("tape_steps", base.n_steps);
  (void)a;
  return sc;
}

int run_train(const CommonArgs& a, const Config& cfg) {
  cfg.ensure_known(kTrainKeys);
  OperatorDataset ds = load_dataset(a.data);

  ModelSpec ms;
  const std::string model = cfg.str("model", "ncde");
  if (model == "ncde")
    ms.kind = ModelKind::Ncde;
  else if (model == "gru")
    ms.kind = ModelKind::Gru;
  else
    throw value_error("train: unknown model '" + model + "' (ncde|gru)");
  const std::string trunk = cfg.str("trunk", "spacetime");
  if (trunk == "spacetime")
    ms.trunk_mode = TrunkMode::Spacetime;
  else if (trunk == "spatial")
    ms.trunk_mode = TrunkMode::Spatial;
  else
    throw value_error("train: unknown trunk '" + trunk + "' (spacetime|spatial)");
  ms.d_in = ds.signals[0].d_in();
  ms.c = ds.c;
  ms.latent = (int)cfg.integer("latent", 64);
  ms.width = (int)cfg.integer("width", 200);
  ms.depth = (int)cfg.integer("depth", 6);
  ms.embed = (int)cfg.integer("embed", 128);

  TrainConfig tc;
  tc.epochs = (int)cfg.integer("epochs", 300);
  tc.batch_size = (int)cfg.integer("batch_size", 128);
  tc.queries_per_sample = (int)cfg.integer("queries_per_sample", 256);
  tc.lr_init = cfg.num("lr_init", 1e-3);
  tc.lr_final = cfg.num("lr_final", 1e-5);
  tc.warmup_frac = cfg.num("warmup_frac", 0.05);
  tc.seed = a.seed >= 0 ? (uint64_t)a.seed : (uint64_t)cfg.integer("seed", 2024);
  const std::string grad = cfg.str("grad", "tape");
  if (grad == "tape")
    tc.grad = GradMode::Tape;
  else if (grad == "adjoint")
    tc.grad = GradMode::Adjoint;
  else
    throw value_error("train: unknown grad mode '" + grad + "' (tape|adjoint)");
  tc.tape_method = method_from_string(cfg.str("solver", "rk4"));
  if (tc.grad == GradMode::Tape && tc.tape_method == Method::Tsit5 &&
      !cfg.has("solver"))
    tc.tape_method = Method::Rk4;
  tc.tape_steps = (int)cfg.integer("tape_steps", 64);
  tc.chunk = (int)cfg.integer("chunk", 32);
  tc.adjoint_solver.method = Method::Tsit5;
  tc.adjoint_solver.rtol = cfg.num("rtol", 1e-4);
  tc.adjoint_solver.atol = cfg.num("atol", 1e-7);
  tc.adjoint_solver.max_steps = (int)cfg.integer("max_steps", 50000);

  std::mt19937_64 g(tc.seed);
  OperatorModel m = make_model(ms, g);
  TrainResult tr = train(m, ds, tc);

  Checkpoint ck;
  ck.model = std::move(m);
  ck.spec = ms;
  ck.seed = tc.seed;
  ck.norm_in = ds.norm_in;
  ck.norm_out = ds.norm_out;
  ck.time_offset = ds.time_offset;
  ck.time_scale = ds.time_scale;
  ck.train_times = ds.query_times;
  if (tc.grad == GradMode::Adjoint) {
    ck.solver = tc.adjoint_solver;
  } else {
    ck.solver.method = Method::Tsit5;  // inference default
    ck.solver.rtol = cfg.num("rtol", 1e-4);
    ck.solver.atol = cfg.num("atol", 1e-7);
    ck.solver.max_steps = (int)cfg.integer("max_steps", 50000);
    ck.solver.n_steps = tc.tape_steps;
  }
  ck.grad_mode = grad;
  ck.final_train_loss = tr.final_loss;
  save_checkpoint(ck, a.out);

  std::string log;
  for (auto& l : tr.log_lines) log += l + "\n";
  write_file(a.out + ".loss.txt", log);
  std::cout << "trained " << tr.steps << " steps, final loss "
            << dbl_str(tr.final_loss) << "; wrote " << a.out << " and "
            << a.out << ".loss.txt\n";
  return 0;
}

int run_eval(const CommonArgs& a, const Config& cfg) {
  cfg.ensure_known(kEvalKeys);
  Checkpoint ck = load_checkpoint(a.ckpt);
  OperatorDataset ds = load_dataset(a.data);
  SolverConfig sc = solver_from(cfg, a, ck.solver);
  int threads = a.threads > 0 ? a.threads : (int)cfg.integer("threads", 1);
  ErrorReport rep = error_report(ck.model, ds, sc, threads);
  write_file(a.out, a.json ? error_report_json(rep) : error_report_text(rep));
  std::cout << "mean_rel_l2 " << dbl_str(rep.mean) << " median_rel_l2 "
            << dbl_str(rep.median) << "; wrote " << a.out << "\n";
  return 0;
}

int run_resample(const CommonArgs& a, const Config& cfg) {
  cfg.ensure_known(kResampleKeys);
  Checkpoint ck = load_checkpoint(a.ckpt);
  OperatorDataset ds = load_dataset(a.data);
  SolverConfig sc = solver_from(cfg, a, ck.solver);
  int threads = a.threads > 0 ? a.threads : (int)cfg.integer("threads", 1);
  double tol = cfg.num("tol", 5e-2);
  ResampleReport rep = resolution_experiment(ck.model, ds, sc, tol, threads);
  write_file(a.out, a.json ? resample_report_json(rep) : resample_report_text(rep));
  std::cout << "frac_ok_half " << dbl_str(rep.frac_ok_half)
            << " frac_ok_double " << dbl_str(rep.frac_ok_double) << "; wrote "
            << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural-CDE operator learning pipeline"};
  app.require_subcommand(1);
  CommonArgs a;
  Config overrides;  // CLI flags override config-file keys

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", a.config, "flat key=value config file");
    if (needs_out) sub->add_option("--out", a.out, "output path")->required();
    sub->add_option("--seed", a.seed, "master RNG seed");
    sub->add_option("--threads", a.threads, "worker threads (results identical for any count)");
  };
  auto opt = [&](CLI::App* sub, const char* flag, const char* key,
                 const char* help) {
    sub->add_option_function<std::string>(
        flag, [&overrides, key](const std::string& v) { overrides.set(key, v); },
        help);
  };

  CLI::App* gen = app.add_subcommand("generate", "build train/test datasets");
  add_common(gen, true);

  CLI::App* tr = app.add_subcommand("train", "train an operator model");
  add_common(tr, true);
  tr->add_option("--data", a.data, "training dataset file")->required();
  opt(tr, "--epochs", "epochs", "training epochs");
  opt(tr, "--batch-size", "batch_size", "batch size");
  opt(tr, "--lr-init", "lr_init", "peak learning rate");
  opt(tr, "--lr-final", "lr_final", "final learning rate");
  opt(tr, "--solver", "solver", "euler|rk4|tsit5");
  opt(tr, "--grad", "grad", "tape|adjoint");
  opt(tr, "--model", "model", "ncde|gru");
  opt(tr, "--trunk", "trunk", "spacetime|spatial");
  opt(tr, "--rtol", "rtol", "adaptive relative tolerance");
  opt(tr, "--atol", "atol", "adaptive absolute tolerance");
  opt(tr, "--max-steps", "max_steps", "adaptive step budget");

  CLI::App* ev = app.add_subcommand("eval", "relative-L2 error report");
  add_common(ev, true);
  ev->add_option("--data", a.data, "dataset file")->required();
  ev->add_option("--ckpt", a.ckpt, "checkpoint file")->required();
  ev->add_flag("--json", a.json, "write a JSON report");
  opt(ev, "--solver", "solver", "euler|rk4|tsit5");
  opt(ev, "--rtol", "rtol", "adaptive relative tolerance");
  opt(ev, "--atol", "atol", "adaptive absolute tolerance");
  opt(ev, "--max-steps", "max_steps", "adaptive step budget");

  CLI::App* rs = app.add_subcommand("resample", "input-resolution experiment");
  add_common(rs, true);
  rs->add_option("--data", a.data, "dataset file")->required();
  rs->add_option("--ckpt", a.ckpt, "checkpoint file")->required();
  rs->add_flag("--json", a.json, "write a JSON report");
  opt(rs, "--solver", "solver", "euler|rk4|tsit5");
  opt(rs, "--rtol", "rtol", "adaptive relative tolerance");
  opt(rs, "--atol", "atol", "adaptive absolute tolerance");
  opt(rs, "--max-steps", "max_steps", "adaptive step budget");

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg;
    if (!a.config.empty()) cfg = Config::load(a.config);
    for (auto& [k, v] : overrides.entries()) cfg.set(k, v);
    if (a.threads > 0) cfg.set("threads", std::to_string(a.threads));
    if (a.seed >= 0) cfg.set("seed", std::to_string(a.seed));
    if (gen->parsed()) return run_generate(a, cfg);
    if (tr->parsed()) return run_train(a, cfg);
    if (ev->parsed()) return run_eval(a, cfg);
    if (rs->parsed()) return run_resample(a, cfg);
    throw value_error("no subcommand");
  } catch (const std::exception& e) {
    std::cerr << "ncdeon: error: " << e.what() << std::endl;
    return 1;
  }
}
