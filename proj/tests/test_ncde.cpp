#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "ncdeon/ncde.hpp"

using namespace ncdeon;

namespace {

ControlPath make_test_path(int n_knots, int d_in, unsigned seed,
                           double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> uv(-1.0, 1.0);
  TimeSeriesSignal s;
  for (int k = 0; k < n_knots; ++k)
    s.times.push_back(lo + (hi - lo) * k / (n_knots - 1));
  s.values = Tensor({n_knots, d_in});
  for (long long i = 0; i < s.values.numel(); ++i) s.values[i] = uv(g);
  return build_path(s);
}

std::vector<double> uniform_grid(double lo, double hi, int n_steps) {
  std::vector<double> g(n_steps + 1);
  for (int k = 0; k <= n_steps; ++k)
    g[k] = lo + (hi - lo) * ((double)k / n_steps);
  g.back() = hi;
  return g;
}

// pointers to every field parameter in the adjoint's flat order
std::vector<double*> field_flat(NcdeParams& p) {
  std::vector<double*> out;
  for (auto& layer : p.field) {
    for (long long i = 0; i < layer.W.numel(); ++i) out.push_back(&layer.W[i]);
    for (long long i = 0; i < layer.b.numel(); ++i) out.push_back(&layer.b[i]);
  }
  return out;
}

double weighted_final(const NcdeParams& p, const ControlPath& path,
                      const Tensor& w, const SolverConfig& cfg) {
  NcdeForwardResult r = ncde_forward(p, path, cfg);
  double acc = 0;
  for (int i = 0; i < p.d; ++i) acc += w[i] * r.zT[i];
  return acc;
}

}  // namespace

TEST_CASE("field output is shaped (B, d*d_path) and bounded by tanh") {
  std::mt19937_64 g(7001);
  NcdeParams p = make_ncde(4, 3, 8, 3, g);
  Tensor z({5, 4});
  std::mt19937_64 g2(7002);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (long long i = 0; i < z.numel(); ++i) z[i] = u(g2);
  Tensor f = ncde_field(p, z);
  REQUIRE(f.rank() == 2);
  CHECK(f.dim(0) == 5);
  CHECK(f.dim(1) == 12);
  for (long long i = 0; i < f.numel(); ++i) {
    CHECK(f[i] > -1.0);
    CHECK(f[i] < 1.0);
  }
  Tensor x0({2, 3});
  for (long long i = 0; i < x0.numel(); ++i) x0[i] = u(g2);
  Tensor z0 = ncde_init_state(p, x0);
  CHECK(z0.dim(0) == 2);
  CHECK(z0.dim(1) == 4);
}

TEST_CASE("make_ncde is deterministic in the seed") {
  std::mt19937_64 g1(42), g2(42), g3(43);
  NcdeParams a = make_ncde(4, 3, 8, 3, g1);
  NcdeParams b = make_ncde(4, 3, 8, 3, g2);
  NcdeParams c = make_ncde(4, 3, 8, 3, g3);
  REQUIRE(a.field.size() == b.field.size());
  bool same = true, differ = false;
  for (size_t l = 0; l < a.field.size(); ++l)
    for (long long i = 0; i < a.field[l].W.numel(); ++i) {
      same = same && a.field[l].W[i] == b.field[l].W[i];
      differ = differ || a.field[l].W[i] != c.field[l].W[i];
    }
  CHECK(same);
  CHECK(differ);
  CHECK(field_param_count(a) == (4 * 8 + 8) + (8 * 8 + 8) + (8 * 12 + 12));
}

TEST_CASE("zero field freezes the latent state bitwise") {
  std::mt19937_64 g(7003);
  NcdeParams p = make_ncde(3, 3, 4, 2, g);
  for (auto& layer : p.field) {
    layer.W = Tensor(layer.W.shape());
    layer.b = Tensor(layer.b.shape());
  }
  ControlPath path = make_test_path(5, 2, 7004);
  Tensor x0 = path.eval(path.t_begin());
  Tensor z0 = ncde_init_state(p, Tensor({1, 3}, {x0[0], x0[1], x0[2]}));

  SolverConfig cfg;
  cfg.rtol = 1e-6;
  cfg.atol = 1e-9;
  NcdeForwardResult r = ncde_forward(p, path, cfg);
  for (int i = 0; i < 3; ++i) CHECK(r.zT[i] == z0.at(0, i));

  cfg.method = Method::Rk4;
  cfg.n_steps = 16;
  r = ncde_forward(p, path, cfg);
  for (int i = 0; i < 3; ++i) CHECK(r.zT[i] == z0.at(0, i));
}

TEST_CASE("zero field: only the last-layer bias receives gradient") {
  std::mt19937_64 g(7005);
  NcdeParams p = make_ncde(3, 3, 4, 2, g);
  for (auto& layer : p.field) {
    layer.W = Tensor(layer.W.shape());
    layer.b = Tensor(layer.b.shape());
  }
  ControlPath path = make_test_path(5, 2, 7006);

  Tape t;
  NcdeTapeLeaves lv = ncde_leaves(t, p);
  std::vector<const ControlPath*> paths = {&path};
  std::vector<double> grid = uniform_grid(path.t_begin(), path.t_end(), 64);
  NcdeTapeResult fr =
      ncde_tape_forward(t, p, lv, paths, grid, Method::Euler);
  Tape::Var loss = t.sum(fr.zT);
  t.backward(loss);

  // every parameter before the last layer is exactly untouched
  for (size_t l = 0; l + 1 < p.field.size(); ++l) {
    Tensor gW = t.grad(lv.field[l][0]);
    Tensor gb = t.grad(lv.field[l][1]);
    for (long long i = 0; i < gW.numel(); ++i) CHECK(gW[i] == 0.0);
    for (long long i = 0; i < gb.numel(); ++i) CHECK(gb[i] == 0.0);
  }
  Tensor gWlast = t.grad(lv.field.back()[0]);
  for (long long i = 0; i < gWlast.numel(); ++i) CHECK(gWlast[i] == 0.0);

  // the last-layer bias sees dL/db_{ij} = sum_k h_k Xdot_j(t_k); for the
  // time channel (last column) that left-Riemann sum telescopes to the span
  Tensor gb = t.grad(lv.field.back()[1]);
  REQUIRE(gb.numel() == 3 * 3);
  double span = path.t_end() - path.t_begin();
  for (int i = 0; i < 3; ++i)
    CHECK(std::fabs(gb[i * 3 + 2] - span) <= 1e-12 * span);
}

TEST_CASE("constant observations make the solve knot-placement invariant") {
  std::mt19937_64 g(7007);
  NcdeParams p = make_ncde(3, 2, 4, 2, g);
  auto const_path = [](std::vector<double> times) {
    TimeSeriesSignal s;
    s.times = std::move(times);
    s.values = Tensor::full({(int)s.times.size(), 1}, 0.7);
    return build_path(s);
  };
  ControlPath pa = const_path({0.0, 0.5, 1.0});
  ControlPath pb = const_path({0.0, 0.1, 0.2, 0.93, 1.0});
  SolverConfig cfg;
  cfg.method = Method::Rk4;
  cfg.n_steps = 32;
  NcdeForwardResult ra = ncde_forward(p, pa, cfg);
  NcdeForwardResult rb = ncde_forward(p, pb, cfg);
  for (int i = 0; i < 3; ++i) CHECK(ra.zT[i] == rb.zT[i]);
}

TEST_CASE("pure-quadrature latent: z(T) = z0 + X(T) - X(0) at solver level") {
  // bypass the network: rhs = Xdot, so the solve is a quadrature of the path
  ControlPath path = make_test_path(6, 2, 7008);
  SolverConfig cfg;
  cfg.rtol = 1e-9;
  cfg.atol = 1e-12;
  Tensor x0 = path.eval(path.t_begin());
  Tensor xT = path.eval(path.t_end());
  Tensor z0({3}, {0.3, -0.2, 0.1});
  auto rhs = [&](double t, const double*, double* dy) { path.deriv(t, dy); };
  OdeResult r = integrate_adaptive(rhs, 3, path.t_begin(), path.t_end(), z0, cfg);
  for (int i = 0; i < 3; ++i) {
    double want = z0[i] + xT[i] - x0[i];
    CHECK(std::fabs(r.y[i] - want) <= 1e-7 * std::max(1.0, std::fabs(want)));
  }
}

TEST_CASE("tape forward agrees with the plain fixed-step forward") {
  std::mt19937_64 g(7009);
  NcdeParams p = make_ncde(4, 3, 8, 3, g);
  ControlPath path = make_test_path(5, 2, 7010);
  for (Method m : {Method::Euler, Method::Rk4}) {
    SolverConfig cfg;
    cfg.method = m;
    cfg.n_steps = 48;
    NcdeForwardResult plain = ncde_forward(p, path, cfg);
    Tape t;
    NcdeTapeLeaves lv = ncde_leaves(t, p);
    std::vector<const ControlPath*> paths = {&path};
    std::vector<double> grid = uniform_grid(path.t_begin(), path.t_end(), 48);
    NcdeTapeResult fr = ncde_tape_forward(t, p, lv, paths, grid, m);
    const Tensor& zT = t.value(fr.zT);
    REQUIRE(zT.numel() == 4);
    for (int i = 0; i < 4; ++i)
      CHECK(std::fabs(zT[i] - plain.zT[i]) <=
            1e-12 * std::max(1.0, std::fabs(plain.zT[i])));
  }
}

TEST_CASE("tape tsit5 converges to the adaptive solve") {
  // method tsit5 means adaptive in ncde_forward; on the tape it is the same
  // tableau stepped on the fixed grid, so the two meet at 5th-order accuracy
  std::mt19937_64 g(7030);
  NcdeParams p = make_ncde(4, 3, 8, 3, g);
  ControlPath path = make_test_path(5, 2, 7031);
  SolverConfig cfg;
  cfg.rtol = 1e-10;
  cfg.atol = 1e-13;
  NcdeForwardResult plain = ncde_forward(p, path, cfg);
  Tape t;
  NcdeTapeLeaves lv = ncde_leaves(t, p);
  std::vector<const ControlPath*> paths = {&path};
  std::vector<double> grid = uniform_grid(path.t_begin(), path.t_end(), 64);
  NcdeTapeResult fr = ncde_tape_forward(t, p, lv, paths, grid, Method::Tsit5);
  const Tensor& zT = t.value(fr.zT);
  for (int i = 0; i < 4; ++i)
    CHECK(std::fabs(zT[i] - plain.zT[i]) <=
          1e-6 * std::max(1.0, std::fabs(plain.zT[i])));
}

TEST_CASE("fixed-step forward records latents exactly at requested times") {
  std::mt19937_64 g(7011);
  NcdeParams p = make_ncde(3, 3, 6, 2, g);
  ControlPath path = make_test_path(5, 2, 7012);
  SolverConfig cfg;
  cfg.method = Method::Rk4;
  cfg.n_steps = 64;
  std::vector<double> t_eval = {0.25, 0.5, 0.75, 1.0};
  std::vector<Tensor> z_eval;
  NcdeForwardResult r = ncde_forward(p, path, cfg, &t_eval, &z_eval);
  REQUIRE(z_eval.size() == 4);
  for (int i = 0; i < 3; ++i)
    CHECK(std::fabs(z_eval.back()[i] - r.zT[i]) <=
          1e-12 * std::max(1.0, std::fabs(r.zT[i])));

  // adaptive dense output lands on the same states to solver accuracy
  SolverConfig acfg;
  acfg.rtol = 1e-9;
  acfg.atol = 1e-12;
  std::vector<Tensor> z_dense;
  ncde_forward(p, path, acfg, &t_eval, &z_dense);
  REQUIRE(z_dense.size() == 4);
  for (size_t k = 0; k < 4; ++k)
    for (int i = 0; i < 3; ++i)
      CHECK(std::fabs(z_dense[k][i] - z_eval[k][i]) <=
            1e-5 * std::max(1.0, std::fabs(z_eval[k][i])));
}

TEST_CASE("adjoint gradient matches the tape gradient") {
  std::mt19937_64 g(7013);
  NcdeParams p = make_ncde(4, 3, 8, 3, g);
  ControlPath path = make_test_path(5, 2, 7014);
  std::uniform_real_distribution<double> uw(-1.0, 1.0);
  Tensor w({4});
  for (int i = 0; i < 4; ++i) w[i] = uw(g);

  // tape side: fixed rk4, fine grid
  Tape t;
  NcdeTapeLeaves lv = ncde_leaves(t, p);
  std::vector<const ControlPath*> paths = {&path};
  std::vector<double> grid = uniform_grid(path.t_begin(), path.t_end(), 128);
  NcdeTapeResult fr = ncde_tape_forward(t, p, lv, paths, grid, Method::Rk4);
  Tape::Var loss = t.sum(t.mul(fr.zT, t.constant(Tensor({1, 4}, {w[0], w[1], w[2], w[3]}))));
  t.backward(loss);

  // adjoint side: adaptive, tight tolerances
  SolverConfig cfg;
  cfg.rtol = 1e-9;
  cfg.atol = 1e-12;
  NcdeForwardResult fwd = ncde_forward(p, path, cfg);
  AdjointResult adj = ncde_adjoint(p, path, fwd.zT, w, cfg);

  // field gradient, flattened in layer order
  std::vector<double> tape_flat;
  for (auto& lw : lv.field) {
    Tensor gW = t.grad(lw[0]);
    Tensor gb = t.grad(lw[1]);
    for (long long i = 0; i < gW.numel(); ++i) tape_flat.push_back(gW[i]);
    for (long long i = 0; i < gb.numel(); ++i) tape_flat.push_back(gb[i]);
  }
  REQUIRE((int)tape_flat.size() == field_param_count(p));
  REQUIRE(adj.gtheta.numel() == field_param_count(p));
  double scale = 0;
  for (double v : tape_flat) scale = std::max(scale, std::fabs(v));
  REQUIRE(scale > 0);
  for (size_t i = 0; i < tape_flat.size(); ++i)
    CHECK(std::fabs(adj.gtheta[(long long)i] - tape_flat[i]) <= 1e-4 * scale);

  // init gradients: dL/db_init equals dL/dz(t0)
  Tensor tgW = t.grad(lv.initW), tgb = t.grad(lv.initb);
  for (long long i = 0; i < tgb.numel(); ++i) {
    CHECK(std::fabs(adj.ginit.b[i] - tgb[i]) <= 1e-4 * std::max(1.0, std::fabs(tgb[i])));
    CHECK(std::fabs(adj.a0[i] - tgb[i]) <= 1e-4 * std::max(1.0, std::fabs(tgb[i])));
  }
  for (long long i = 0; i < tgW.numel(); ++i)
    CHECK(std::fabs(adj.ginit.W[i] - tgW[i]) <= 1e-4 * std::max(1.0, std::fabs(tgW[i])));
}

TEST_CASE("adjoint gradient matches central finite differences") {
  std::mt19937_64 g(7015);
  NcdeParams p = make_ncde(3, 3, 6, 2, g);
  ControlPath path = make_test_path(4, 2, 7016);
  Tensor w({3}, {0.8, -0.5, 0.3});
  SolverConfig cfg;
  cfg.rtol = 1e-10;
  cfg.atol = 1e-13;
  NcdeForwardResult fwd = ncde_forward(p, path, cfg);
  AdjointResult adj = ncde_adjoint(p, path, fwd.zT, w, cfg);

  std::vector<double*> flat = field_flat(p);
  REQUIRE((int)flat.size() == field_param_count(p));
  std::mt19937_64 pick(7017);
  std::uniform_int_distribution<size_t> ui(0, flat.size() - 1);
  double h = 1e-5;
  for (int probe = 0; probe < 6; ++probe) {
    size_t idx = ui(pick);
    double keep = *flat[idx];
    *flat[idx] = keep + h;
    double lp = weighted_final(p, path, w, cfg);
    *flat[idx] = keep - h;
    double lm = weighted_final(p, path, w, cfg);
    *flat[idx] = keep;
    double fd = (lp - lm) / (2 * h);
    double an = adj.gtheta[(long long)idx];
    CHECK(std::fabs(fd - an) <= 1e-4 * std::max(1.0, std::max(std::fabs(fd), std::fabs(an))));
  }
}

TEST_CASE("field_vjp matches finite differences of the field") {
  std::mt19937_64 g(7018);
  NcdeParams p = make_ncde(3, 3, 6, 2, g);
  int dp = 3 * 3;
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  std::vector<double> z(3), A(dp);
  for (auto& v : z) v = u(g);
  for (auto& v : A) v = u(g);

  auto objective = [&]() {
    Tensor zt({1, 3}, {z[0], z[1], z[2]});
    Tensor f = ncde_field(p, zt);
    double acc = 0;
    for (int i = 0; i < dp; ++i) acc += A[i] * f[i];
    return acc;
  };

  std::vector<double> gz(3, 0.0), gtheta(field_param_count(p), 0.0);
  field_vjp(p, z.data(), A.data(), gz.data(), gtheta.data());

  double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    double keep = z[i];
    z[i] = keep + h;
    double lp = objective();
    z[i] = keep - h;
    double lm = objective();
    z[i] = keep;
    double fd = (lp - lm) / (2 * h);
    CHECK(std::fabs(fd - gz[i]) <= 1e-6 * std::max(1.0, std::fabs(fd)));
  }
  std::vector<double*> flat = field_flat(p);
  std::mt19937_64 pick(7019);
  std::uniform_int_distribution<size_t> ui(0, flat.size() - 1);
  for (int probe = 0; probe < 12; ++probe) {
    size_t idx = ui(pick);
    double keep = *flat[idx];
    *flat[idx] = keep + h;
    double lp = objective();
    *flat[idx] = keep - h;
    double lm = objective();
    *flat[idx] = keep;
    double fd = (lp - lm) / (2 * h);
    CHECK(std::fabs(fd - gtheta[idx]) <= 1e-6 * std::max(1.0, std::fabs(fd)));
  }
}

TEST_CASE("tape forward with save indices returns the grid states") {
  std::mt19937_64 g(7020);
  NcdeParams p = make_ncde(3, 3, 6, 2, g);
  ControlPath path = make_test_path(5, 2, 7021);
  Tape t;
  NcdeTapeLeaves lv = ncde_leaves(t, p);
  std::vector<const ControlPath*> paths = {&path};
  std::vector<double> grid = uniform_grid(path.t_begin(), path.t_end(), 16);
  std::vector<int> save = {0, 8, 16};
  NcdeTapeResult fr = ncde_tape_forward(t, p, lv, paths, grid, Method::Rk4, save);
  REQUIRE(fr.z_saved.size() == 3);
  Tensor s0 = t.value(fr.z_saved[0]);
  Tensor s2 = t.value(fr.z_saved[2]);
  Tensor zT = t.value(fr.zT);

  // save index 0 is the initial latent; the last save coincides with zT
  Tensor x0 = path.eval(path.t_begin());
  Tensor z0 = ncde_init_state(p, Tensor({1, 3}, {x0[0], x0[1], x0[2]}));
  for (int i = 0; i < 3; ++i) {
    CHECK(s0[i] == z0[i]);
    CHECK(s2[i] == zT[i]);
  }
}
