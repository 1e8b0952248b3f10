#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "doctest.h"
#include "ncdeon/pde_data.hpp"

using namespace ncdeon;

namespace {

BcSignal const_bc(double v, double t_end) {
  BcSignal s;
  s.family = "pwl";
  s.knot_t = {0.0, t_end};
  s.knot_v = {v, v};
  return s;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("fourier signals start at zero and respect the amplitude") {
  SignalConfig sc;
  sc.family = "fourier";
  sc.amplitude = 0.8;
  std::mt19937_64 g(11001);
  for (int trial = 0; trial < 20; ++trial) {
    BcSignal s = sample_signal(sc, 2.0, g);
    CHECK(s.eval(0.0) == 0.0);
    for (int i = 0; i <= 500; ++i)
      CHECK(std::fabs(s.eval(2.0 * i / 500.0)) <= 0.8 * 1.0001);
  }
}

TEST_CASE("pwl signals start at zero, stay bounded, and hit their knots") {
  SignalConfig sc;
  sc.family = "pwl";
  sc.amplitude = 1.3;
  sc.knots_min = 4;
  sc.knots_max = 10;
  std::mt19937_64 g(11002);
  for (int trial = 0; trial < 20; ++trial) {
    BcSignal s = sample_signal(sc, 2.0, g);
    CHECK(s.eval(0.0) == 0.0);
    CHECK(s.knot_v[0] == 0.0);
    REQUIRE(s.knot_t.size() >= 4);
    REQUIRE(s.knot_t.size() <= 10);
    CHECK(s.knot_t.front() == 0.0);
    CHECK(s.knot_t.back() == 2.0);
    for (size_t k = 0; k < s.knot_t.size(); ++k) {
      CHECK(std::fabs(s.knot_v[k]) <= 1.3);
      CHECK(s.eval(s.knot_t[k]) == s.knot_v[k]);
      if (k) CHECK(s.knot_t[k] > s.knot_t[k - 1]);
    }
    for (int i = 0; i <= 200; ++i)
      CHECK(std::fabs(s.eval(2.0 * i / 200.0)) <= 1.3);
  }
}

TEST_CASE("sample_signal is deterministic in the generator state") {
  SignalConfig sc;
  std::mt19937_64 g1(5), g2(5);
  BcSignal a = sample_signal(sc, 2.0, g1);
  BcSignal b = sample_signal(sc, 2.0, g2);
  REQUIRE(a.amps.size() == b.amps.size());
  for (size_t k = 0; k < a.amps.size(); ++k) {
    CHECK(a.amps[k] == b.amps[k]);
    CHECK(a.freqs[k] == b.freqs[k]);
    CHECK(a.phases[k] == b.phases[k]);
  }
  CHECK(a.scale == b.scale);
  CHECK_THROWS_AS([&] {
    SignalConfig bad;
    bad.family = "sawtooth";
    std::mt19937_64 g(1);
    sample_signal(bad, 2.0, g);
  }(), value_error);
}

TEST_CASE("zero boundary data gives the exact zero solution") {
  PoissonConfig pc;
  pc.nx = pc.ny = 10;
  pc.n_saves = 8;
  pc.substeps = 2;
  Tensor u = solve_poisson(pc, const_bc(0.0, pc.t_end));
  REQUIRE(u.dim(0) == 8);
  REQUIRE(u.dim(1) == 100);
  for (long long i = 0; i < u.numel(); ++i) CHECK(u[i] == 0.0);
}

TEST_CASE("constant boundary data relaxes to the linear steady state") {
  PoissonConfig pc;
  pc.nx = pc.ny = 16;
  pc.t_end = 2.0;
  pc.n_saves = 40;
  pc.substeps = 4;
  double a = 0.75;
  Tensor u = solve_poisson(pc, const_bc(a, pc.t_end));
  double hx = 1.0 / (pc.nx - 1);
  const double* fin = u.data() + (long long)(pc.n_saves - 1) * pc.nx * pc.ny;
  for (int j = 0; j < pc.ny; ++j)
    for (int i = 0; i < pc.nx; ++i) {
      double want = a * i * hx;
      CHECK(std::fabs(fin[j * pc.nx + i] - want) <= 1e-3);
    }
}

TEST_CASE("snapshots carry the boundary conditions exactly") {
  PoissonConfig pc;
  pc.nx = pc.ny = 10;
  pc.n_saves = 6;
  pc.substeps = 2;
  SignalConfig sc;
  std::mt19937_64 g(11003);
  BcSignal bc = sample_signal(sc, pc.t_end, g);
  Tensor u = solve_poisson(pc, bc);
  double save_dt = pc.t_end / (pc.n_saves - 1);
  for (int s = 0; s < pc.n_saves; ++s) {
    const double* row = u.data() + (long long)s * 100;
    double gval = bc.eval(s * save_dt);
    for (int j = 0; j < pc.ny; ++j) {
      CHECK(row[j * pc.nx + 0] == 0.0);                // Dirichlet left
      CHECK(row[j * pc.nx + pc.nx - 1] == gval);       // Dirichlet right
    }
  }
  // t = 0 snapshot is the zero initial condition away from the right edge
  for (int j = 0; j < pc.ny; ++j)
    for (int i = 0; i + 1 < pc.nx; ++i) CHECK(u[j * pc.nx + i] == 0.0);
}

TEST_CASE("the discrete maximum principle holds") {
  PoissonConfig pc;
  pc.nx = pc.ny = 12;
  pc.n_saves = 15;
  pc.substeps = 2;
  SignalConfig sc;
  sc.amplitude = 1.0;
  std::mt19937_64 g(11004);
  for (int trial = 0; trial < 5; ++trial) {
    BcSignal bc = sample_signal(sc, pc.t_end, g);
    Tensor u = solve_poisson(pc, bc);
    for (long long i = 0; i < u.numel(); ++i)
      CHECK(std::fabs(u[i]) <= 1.0 + 1e-8);
  }
}

TEST_CASE("grid refinement changes coincident nodes only slightly") {
  SignalConfig sc;
  std::mt19937_64 g(11005);
  PoissonConfig coarse;
  coarse.nx = coarse.ny = 17;
  coarse.n_saves = 20;
  coarse.substeps = 4;
  BcSignal bc = sample_signal(sc, coarse.t_end, g);
  Tensor uc = solve_poisson(coarse, bc);
  PoissonConfig fine = coarse;
  fine.nx = fine.ny = 33;
  Tensor uf = solve_poisson(fine, bc);

  // every coarse node (i,j) coincides with fine node (2i,2j)
  double num = 0, den = 0;
  int s = coarse.n_saves - 1;
  const double* rc = uc.data() + (long long)s * 17 * 17;
  const double* rf = uf.data() + (long long)s * 33 * 33;
  for (int j = 0; j < 17; ++j)
    for (int i = 0; i < 17; ++i) {
      double d = rc[j * 17 + i] - rf[2 * j * 33 + 2 * i];
      num += d * d;
      den += rf[2 * j * 33 + 2 * i] * rf[2 * j * 33 + 2 * i];
    }
  REQUIRE(den > 0);
  CHECK(std::sqrt(num / den) < 2e-2);
}

TEST_CASE("solver input validation") {
  PoissonConfig pc;
  pc.nx = 4;
  CHECK_THROWS_AS(solve_poisson(pc, const_bc(0.0, 2.0)), value_error);
  pc.nx = 16;
  pc.n_saves = 1;
  CHECK_THROWS_AS(solve_poisson(pc, const_bc(0.0, 2.0)), value_error);
}

TEST_CASE("build_dataset layout, normalization, and metadata") {
  GenConfig gc;
  gc.n_train = 6;
  gc.n_test = 3;
  gc.pde.nx = gc.pde.ny = 9;
  gc.pde.n_saves = 7;
  gc.pde.substeps = 2;
  gc.seed = 321;
  auto [train, test] = build_dataset(gc);
  CHECK_NOTHROW(train.validate());
  CHECK_NOTHROW(test.validate());
  CHECK(train.n_samples() == 6);
  CHECK(test.n_samples() == 3);
  CHECK(train.n_points() == 81);
  CHECK(train.n_times() == 7);
  CHECK(train.targets.dim(1) == 7 * 81);
  CHECK(train.meta.at("split") == "train");
  CHECK(test.meta.at("split") == "test");
  CHECK(train.meta.at("pde") == "transient-poisson");
  CHECK(train.meta.at("nx") == "9");
  CHECK(train.meta.at("seed") == "321");
  CHECK(train.time_scale == 2.0);
  CHECK(train.time_offset == 0.0);

  // normalization constants come from the train split and are shared
  REQUIRE(train.norm_in.size() == 1);
  CHECK(train.norm_in[0] == test.norm_in[0]);
  CHECK(train.norm_out[0] == test.norm_out[0]);
  double mx_sig = 0, mx_tgt = 0;
  for (auto& s : train.signals) mx_sig = std::max(mx_sig, ops::max_abs(s.values));
  mx_tgt = ops::max_abs(train.targets);
  CHECK(mx_sig == 1.0);  // max-abs scaling puts the train maximum at exactly 1
  CHECK(mx_tgt == 1.0);

  // times normalized to [0,1] and shared between signals and queries
  for (auto& s : train.signals) {
    REQUIRE(s.times.size() == 7);
    CHECK(s.times.front() == 0.0);
    CHECK(s.times.back() == 1.0);
    CHECK(s.values.at(0, 0) == 0.0);  // bc(0) = 0 survives normalization
    for (int k = 0; k < 7; ++k) CHECK(s.times[k] == train.query_times[k]);
  }

  // query grid covers the unit square with p = j*nx + i
  CHECK(train.query_points.at(0, 0) == 0.0);
  CHECK(train.query_points.at(0, 1) == 0.0);
  CHECK(train.query_points.at(8, 0) == 1.0);
  CHECK(train.query_points.at(80, 1) == 1.0);
  CHECK(train.query_points.at(9 * 3 + 2, 0) == 2.0 / 8.0);

  CHECK_THROWS_AS([&] {
    GenConfig bad = gc;
    bad.n_test = 0;
    build_dataset(bad);
  }(), value_error);
}

TEST_CASE("build_dataset is seed deterministic and thread invariant") {
  GenConfig gc;
  gc.n_train = 4;
  gc.n_test = 2;
  gc.pde.nx = gc.pde.ny = 9;
  gc.pde.n_saves = 5;
  gc.pde.substeps = 2;
  gc.seed = 777;
  gc.threads = 1;
  auto [a_train, a_test] = build_dataset(gc);
  gc.threads = 3;
  auto [b_train, b_test] = build_dataset(gc);
  for (long long i = 0; i < a_train.targets.numel(); ++i)
    CHECK(a_train.targets[i] == b_train.targets[i]);
  for (long long i = 0; i < a_test.targets.numel(); ++i)
    CHECK(a_test.targets[i] == b_test.targets[i]);
  for (int s = 0; s < 4; ++s)
    for (long long i = 0; i < a_train.signals[s].values.numel(); ++i)
      CHECK(a_train.signals[s].values[i] == b_train.signals[s].values[i]);

  gc.seed = 778;
  auto [c_train, c_test] = build_dataset(gc);
  double diff = 0;
  for (long long i = 0; i < a_train.targets.numel(); ++i)
    diff = std::max(diff, std::fabs(a_train.targets[i] - c_train.targets[i]));
  CHECK(diff > 0.0);
}

TEST_CASE("dataset files round trip byte for byte") {
  GenConfig gc;
  gc.n_train = 3;
  gc.n_test = 1;
  gc.pde.nx = gc.pde.ny = 9;
  gc.pde.n_saves = 5;
  gc.pde.substeps = 2;
  auto [train, test] = build_dataset(gc);

  std::string p1 = "io_test_ds1.bin", p2 = "io_test_ds2.bin";
  save_dataset(train, p1);
  OperatorDataset lt = load_dataset(p1);
  CHECK_NOTHROW(lt.validate());
  CHECK(lt.n_samples() == 3);
  CHECK(lt.meta.at("split") == "train");
  for (long long i = 0; i < train.targets.numel(); ++i)
    CHECK(lt.targets[i] == train.targets[i]);
  for (int s = 0; s < 3; ++s) {
    for (size_t k = 0; k < train.signals[s].times.size(); ++k)
      CHECK(lt.signals[s].times[k] == train.signals[s].times[k]);
    for (long long k = 0; k < train.signals[s].values.numel(); ++k)
      CHECK(lt.signals[s].values[k] == train.signals[s].values[k]);
  }
  save_dataset(lt, p2);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("dataset validation catches inconsistencies") {
  GenConfig gc;
  gc.n_train = 2;
  gc.n_test = 1;
  gc.pde.nx = gc.pde.ny = 9;
  gc.pde.n_saves = 5;
  gc.pde.substeps = 2;
  auto [train, test] = build_dataset(gc);
  OperatorDataset bad = train;
  bad.norm_out = {-1.0};
  CHECK_THROWS_AS(bad.validate(), value_error);
  bad = train;
  bad.targets = Tensor({2, 7});
  CHECK_THROWS_AS(bad.validate(), value_error);
  bad = train;
  bad.signals.pop_back();
  CHECK_THROWS_AS(bad.validate(), value_error);
}
