#include "ncdeon/ncde.hpp"

#include <cmath>
#include <cstring>

namespace ncdeon {

NcdeParams make_ncde(int d, int d_path, int width, int depth,
                     std::mt19937_64& g) {
  if (d < 1 || d_path < 1 || width < 1 || depth < 2)
    throw value_error("make_ncde: need d,d_path,width >= 1 and depth >= 2");
  NcdeParams p;
  p.d = d;
  p.d_path = d_path;
  p.width = width;
  p.depth = depth;
  p.init = glorot_affine(d_path, d, g);
  for (int l = 0; l < depth; ++l) {
    int in = l == 0 ? d : width;
    int out = l == depth - 1 ? d * d_path : width;
    p.field.push_back(glorot_affine(in, out, g));
  }
  return p;
}

int field_param_count(const NcdeParams& p) {
  int n = 0;
  for (auto& a : p.field) n += (int)(a.W.numel() + a.b.numel());
  return n;
}

Tensor ncde_field(const NcdeParams& p, const Tensor& z) {
  if (z.rank() != 2 || z.dim(1) != p.d)
    throw value_error(strf("ncde_field: z must be (B,%d), got ", p.d) + shape_str(z));
  Tensor h = z;
  int L = (int)p.field.size();
  for (int l = 0; l < L; ++l) {
    h = affine_apply(p.field[l], h);
    h = (l + 1 < L) ? ops::gelu(h) : ops::tanh(h);
  }
  return h;
}

Tensor ncde_init_state(const NcdeParams& p, const Tensor& x0) {
  if (x0.rank() != 2 || x0.dim(1) != p.d_path)
    throw value_error(strf("ncde_init_state: x0 must be (B,%d), got ", p.d_path) +
                      shape_str(x0));
  return affine_apply(p.init, x0);
}

namespace {

// per-row field workspace: layer inputs and pre-activations
struct FieldWs {
  std::vector<dvec> x;  // x[l] = input to layer l; x[L] = output (post-act)
  std::vector<dvec> u;  // u[l] = pre-activation of layer l
  explicit FieldWs(const NcdeParams& p) {
    int L = p.depth;
    x.resize(L + 1);
    u.resize(L);
    for (int l = 0; l < L; ++l) {
      x[l].assign(p.field[l].in(), 0.0);
      u[l].assign(p.field[l].out(), 0.0);
    }
    x[L].assign(p.field[L - 1].out(), 0.0);
  }
};

void field_forward_row(const NcdeParams& p, const double* z, FieldWs& ws,
                       double* F) {
  int L = p.depth;
  std::memcpy(ws.x[0].data(), z, p.d * sizeof(double));
  for (int l = 0; l < L; ++l) {
    const Affine& a = p.field[l];
    int in = a.in(), out = a.out();
    const double* W = a.W.data();
    const double* xi = ws.x[l].data();
    double* u = ws.u[l].data();
    for (int j = 0; j < out; ++j) u[j] = a.b[j];
    for (int i = 0; i < in; ++i) {
      double xv = xi[i];
      const double* wrow = W + (long long)i * out;
      for (int j = 0; j < out; ++j) u[j] += xv * wrow[j];
    }
    double* xo = ws.x[l + 1].data();
    if (l + 1 < L)
      for (int j = 0; j < out; ++j) xo[j] = gelu(u[j]);
    else
      for (int j = 0; j < out; ++j) xo[j] = fast_tanh(u[j]);
  }
  std::memcpy(F, ws.x[L].data(), ws.x[L].size() * sizeof(double));
}

// reverse sweep; gtheta laid out layer by layer, W then b.  delta buffers
// sized to the widest layer.
void field_vjp_row(const NcdeParams& p, const FieldWs& ws, const double* A,
                   double* gz, double* gtheta) {
  int L = p.depth;
  int wide = 0;
  for (auto& a : p.field) wide = std::max(wide, std::max(a.in(), a.out()));
  dvec delta(wide, 0.0), dprev(wide, 0.0);
  // theta offsets
  std::vector<long long> off(L + 1, 0);
  for (int l = 0; l < L; ++l)
    off[l + 1] = off[l] + p.field[l].W.numel() + p.field[l].b.numel();
  // output activation: tanh
  {
    const dvec& xL = ws.x[L];
    for (size_t j = 0; j < xL.size(); ++j)
      delta[j] = A[j] * (1.0 - xL[j] * xL[j]);
  }
  for (int l = L - 1; l >= 0; --l) {
    const Affine& a = p.field[l];
    int in = a.in(), out = a.out();
    double* gW = gtheta + off[l];
    double* gb = gtheta + off[l] + a.W.numel();
    const double* xi = ws.x[l].data();
    for (int i = 0; i < in; ++i) {
      double xv = xi[i];
      double* gwrow = gW + (long long)i * out;
      for (int j = 0; j < out; ++j) gwrow[j] += xv * delta[j];
    }
    for (int j = 0; j < out; ++j) gb[j] += delta[j];
    // dprev = W delta, then through the previous activation
    const double* W = a.W.data();
    for (int i = 0; i < in; ++i) {
      const double* wrow = W + (long long)i * out;
      double s = 0;
      for (int j = 0; j < out; ++j) s += wrow[j] * delta[j];
      dprev[i] = s;
    }
    if (l > 0) {
      const dvec& u = ws.u[l - 1];
      for (int i = 0; i < in; ++i) delta[i] = dprev[i] * gelu_grad(u[i]);
    } else {
      for (int i = 0; i < in; ++i) gz[i] = dprev[i];
    }
  }
}

}  // namespace

void field_vjp(const NcdeParams& p, const double* z, const double* A,
               double* gz, double* gtheta) {
  FieldWs ws(p);
  dvec F(p.d * p.d_path, 0.0);
  field_forward_row(p, z, ws, F.data());
  field_vjp_row(p, ws, A, gz, gtheta);
}

NcdeForwardResult ncde_forward(const NcdeParams& p, const ControlPath& path,
                               const SolverConfig& cfg,
                               const std::vector<double>* t_eval,
                               std::vector<Tensor>* z_eval) {
  if (path.dim() != p.d_path)
    throw value_error(strf("ncde_forward: path dim %d vs model d_path %d",
                           path.dim(), p.d_path));
  int d = p.d, dp = p.d_path;
  FieldWs ws(p);
  dvec F(d * dp, 0.0), xdot(dp, 0.0);
  Rhs rhs = [&](double t, const double* y, double* dy) {
    path.deriv(t, xdot.data());
    field_forward_row(p, y, ws, F.data());
    for (int i = 0; i < d; ++i) {
      double s = 0;
      for (int j = 0; j < dp; ++j) s += F[(long long)i * dp + j] * xdot[j];
      dy[i] = s;
    }
  };

  Tensor x0({1, dp});
  path.eval(path.t_begin(), x0.data());
  Tensor z0row = ncde_init_state(p, x0);
  Tensor z0({d});
  std::memcpy(z0.data(), z0row.data(), d * sizeof(double));

  NcdeForwardResult out;
  if (cfg.method == Method::Tsit5) {
    auto r = integrate_adaptive(rhs, d, path.t_begin(), path.t_end(), z0, cfg,
                                t_eval, z_eval);
    out.zT = std::move(r.y);
    out.steps = r.steps;
    out.rejected = r.rejected;
  } else if (!t_eval || t_eval->empty()) {
    auto r = integrate_fixed(rhs, d, path.t_begin(), path.t_end(), z0,
                             cfg.method, cfg.n_steps);
    out.zT = std::move(r.y);
    out.steps = r.steps;
  } else {
    // fixed-step with recording: step segment by segment so every recording
    // time is an exact step endpoint
    double span = path.t_end() - path.t_begin();
    Tensor z = z0;
    double t = path.t_begin();
    for (double te : *t_eval) {
      if (te < t - 1e-12 || te > path.t_end() + 1e-12 * std::fabs(span))
        throw value_error(strf("ncde_forward: t_eval %.17g outside span", te));
      if (te > t) {
        int sub = std::max(1, (int)std::ceil(cfg.n_steps * (te - t) / span));
        z = integrate_fixed(rhs, d, t, te, z, cfg.method, sub).y;
        out.steps += sub;
        t = te;
      }
      if (z_eval) z_eval->push_back(z);
    }
    if (t < path.t_end()) {
      int sub = std::max(1, (int)std::ceil(cfg.n_steps * (path.t_end() - t) / span));
      z = integrate_fixed(rhs, d, t, path.t_end(), z, cfg.method, sub).y;
      out.steps += sub;
    }
    out.zT = std::move(z);
  }
  return out;
}

AdjointResult ncde_adjoint(const NcdeParams& p, const ControlPath& path,
                           const Tensor& zT, const Tensor& aT,
                           const SolverConfig& cfg) {
  int d = p.d, dp = p.d_path;
  int P = field_param_count(p);
  if (zT.numel() != d || aT.numel() != d)
    throw value_error(strf("ncde_adjoint: zT/aT must have %d entries", d));
  int n = 2 * d + P;
  Tensor y0({n});
  std::memcpy(y0.data(), zT.data(), d * sizeof(double));
  std::memcpy(y0.data() + d, aT.data(), d * sizeof(double));
  // p(T) = 0 already

  FieldWs ws(p);
  dvec F(d * dp, 0.0), xdot(dp, 0.0), A(d * dp, 0.0);
  Rhs rhs = [&](double t, const double* y, double* dy) {
    const double* z = y;
    const double* a = y + d;
    path.deriv(t, xdot.data());
    field_forward_row(p, z, ws, F.data());
    for (int i = 0; i < d; ++i) {
      double s = 0;
      for (int j = 0; j < dp; ++j) s += F[(long long)i * dp + j] * xdot[j];
      dy[i] = s;
    }
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < dp; ++j) A[(long long)i * dp + j] = a[i] * xdot[j];
    double* ga = dy + d;
    double* gp = dy + 2 * d;
    std::memset(ga, 0, d * sizeof(double));
    std::memset(gp, 0, (size_t)P * sizeof(double));
    field_vjp_row(p, ws, A.data(), ga, gp);
    for (int i = 0; i < d; ++i) ga[i] = -ga[i];
    for (int i = 0; i < P; ++i) gp[i] = -gp[i];
  };

  Tensor yend;
  int steps = 0;
  try {
    if (cfg.method == Method::Tsit5) {
      auto r = integrate_adaptive(rhs, n, path.t_end(), path.t_begin(), y0, cfg);
      yend = std::move(r.y);
      steps = r.steps;
    } else {
      auto r = integrate_fixed(rhs, n, path.t_end(), path.t_begin(), y0,
                               cfg.method, cfg.n_steps);
      yend = std::move(r.y);
      steps = r.steps;
    }
  } catch (const solver_blowup& e) {
    bool z_bad = false;
    for (int i = 0; i < d && i < (int)e.y.numel(); ++i)
      if (!std::isfinite(e.y[i])) z_bad = true;
    if (z_bad)
      throw numeric_error(strf(
          "ncde_adjoint: latent reconstruction diverged (z non-finite at "
          "t=%.17g); the backward re-solve left the training trajectory", e.t));
    throw numeric_error(strf(
        "ncde_adjoint: adjoint state blew up (a/p non-finite at t=%.17g)", e.t));
  }

  AdjointResult out;
  out.steps = steps;
  out.a0 = Tensor({d});
  std::memcpy(out.a0.data(), yend.data() + d, d * sizeof(double));
  out.gtheta = Tensor({P});
  std::memcpy(out.gtheta.data(), yend.data() + 2 * d, (size_t)P * sizeof(double));
  // fold a(t0) through z0 = x0 W + b
  Tensor x0({dp});
  path.eval(path.t_begin(), x0.data());
  out.ginit.W = Tensor({dp, d});
  out.ginit.b = out.a0;
  for (int j = 0; j < dp; ++j)
    for (int i = 0; i < d; ++i) out.ginit.W.at(j, i) = x0[j] * out.a0[i];
  return out;
}

// ---- tape rollout --------------------------------------------------------

NcdeTapeLeaves ncde_leaves(Tape& tape, const NcdeParams& p) {
  NcdeTapeLeaves lv;
  lv.initW = tape.leaf(p.init.W);
  lv.initb = tape.leaf(p.init.b);
  for (auto& a : p.field)
    lv.field.push_back({tape.leaf(a.W), tape.leaf(a.b)});
  return lv;
}

namespace {

Tape::Var field_tape(Tape& tape, const NcdeParams& p, const NcdeTapeLeaves& lv,
                     Tape::Var z) {
  int L = p.depth;
  Tape::Var h = z;
  for (int l = 0; l < L; ++l) {
    h = tape.linear(h, lv.field[l][0], lv.field[l][1]);
    h = (l + 1 < L) ? tape.gelu(h) : tape.tanh(h);
  }
  return h;
}

}  // namespace

NcdeTapeResult ncde_tape_forward(Tape& tape, const NcdeParams& p,
                                 const NcdeTapeLeaves& lv,
                                 const std::vector<const ControlPath*>& paths,
                                 const std::vector<double>& grid, Method method,
                                 const std::vector<int>& save_idx) {
  int B = (int)paths.size();
  int dp = p.d_path, d = p.d;
  if (B == 0) throw value_error("ncde_tape_forward: no paths");
  if (grid.size() < 2) throw value_error("ncde_tape_forward: grid needs >= 2 points");
  for (auto* pp : paths)
    if (pp->dim() != dp)
      throw value_error("ncde_tape_forward: path dim mismatch");
  for (int idx : save_idx)
    if (idx < 0 || idx >= (int)grid.size())
      throw value_error(strf("ncde_tape_forward: save index %d outside grid", idx));

  auto xdot_at = [&](double t) {
    Tensor xd({B, dp});
    for (int b = 0; b < B; ++b) paths[b]->deriv(t, xd.data() + (long long)b * dp);
    return tape.constant(std::move(xd));
  };
  auto f_eval = [&](Tape::Var z, Tape::Var xd) {
    return tape.contract_path(field_tape(tape, p, lv, z), xd, d, dp);
  };

  Tensor x0({B, dp});
  for (int b = 0; b < B; ++b) paths[b]->eval(grid[0], x0.data() + (long long)b * dp);
  Tape::Var z = tape.linear(tape.constant(std::move(x0)), lv.initW, lv.initb);

  NcdeTapeResult out;
  size_t save_pos = 0;
  auto maybe_save = [&](int gi) {
    while (save_pos < save_idx.size() && save_idx[save_pos] == gi) {
      out.z_saved.push_back(z);
      ++save_pos;
    }
  };
  maybe_save(0);

  int K = (int)grid.size() - 1;
  for (int k = 0; k < K; ++k) {
    double t = grid[k];
    double h = grid[k + 1] - grid[k];
    switch (method) {
      case Method::Euler: {
        Tape::Var k1 = f_eval(z, xdot_at(t));
        z = tape.weighted_sum({{1.0, z}, {h, k1}});
        break;
      }
      case Method::Rk4: {
        Tape::Var xd0 = xdot_at(t);
        Tape::Var xdm = xdot_at(t + 0.5 * h);
        Tape::Var xd1 = xdot_at(t + h);
        Tape::Var k1 = f_eval(z, xd0);
        Tape::Var k2 = f_eval(tape.weighted_sum({{1.0, z}, {0.5 * h, k1}}), xdm);
        Tape::Var k3 = f_eval(tape.weighted_sum({{1.0, z}, {0.5 * h, k2}}), xdm);
        Tape::Var k4 = f_eval(tape.weighted_sum({{1.0, z}, {h, k3}}), xd1);
        z = tape.weighted_sum({{1.0, z},
                               {h / 6.0, k1},
                               {h / 3.0, k2},
                               {h / 3.0, k3},
                               {h / 6.0, k4}});
        break;
      }
      case Method::Tsit5: {
        // 7-stage scheme, b7 = 0 -> six stage evaluations
        static constexpr double c2 = 0.161, c3 = 0.327, c4 = 0.9,
                                c5 = 0.9800255409045097;
        static constexpr double a21 = 0.161;
        static constexpr double a31 = -0.008480655492356989,
                                a32 = 0.335480655492357;
        static constexpr double a41 = 2.8971530571054935,
                                a42 = -6.359448489975075,
                                a43 = 4.3622954328695815;
        static constexpr double a51 = 5.325864828439257,
                                a52 = -11.748883564062828,
                                a53 = 7.4955393428898365,
                                a54 = -0.09249506636175525;
        static constexpr double a61 = 5.86145544294642,
                                a62 = -12.92096931784711,
                                a63 = 8.159367898576159,
                                a64 = -0.071584973281401,
                                a65 = -0.028269050394068383;
        static constexpr double b1 = 0.09646076681806523, b2 = 0.01,
                                b3 = 0.4798896504144996, b4 = 1.379008574103742,
                                b5 = -3.290069515436081, b6 = 2.324710524099774;
        Tape::Var k1 = f_eval(z, xdot_at(t));
        Tape::Var k2 = f_eval(tape.weighted_sum({{1.0, z}, {h * a21, k1}}),
                              xdot_at(t + c2 * h));
        Tape::Var k3 = f_eval(
            tape.weighted_sum({{1.0, z}, {h * a31, k1}, {h * a32, k2}}),
            xdot_at(t + c3 * h));
        Tape::Var k4 = f_eval(
            tape.weighted_sum(
                {{1.0, z}, {h * a41, k1}, {h * a42, k2}, {h * a43, k3}}),
            xdot_at(t + c4 * h));
        Tape::Var k5 = f_eval(tape.weighted_sum({{1.0, z},
                                                 {h * a51, k1},
                                                 {h * a52, k2},
                                                 {h * a53, k3},
                                                 {h * a54, k4}}),
                              xdot_at(t + c5 * h));
        Tape::Var k6 = f_eval(tape.weighted_sum({{1.0, z},
                                                 {h * a61, k1},
                                                 {h * a62, k2},
                                                 {h * a63, k3},
                                                 {h * a64, k4},
                                                 {h * a65, k5}}),
                              xdot_at(t + h));
        z = tape.weighted_sum({{1.0, z},
                               {h * b1, k1},
                               {h * b2, k2},
                               {h * b3, k3},
                               {h * b4, k4},
                               {h * b5, k5},
                               {h * b6, k6}});
        break;
      }
    }
    ops::ensure_finite(tape.value(z), "ncde_tape_forward latent state");
    maybe_save(k + 1);
  }
  out.zT = z;
  return out;
}

}  // namespace ncdeon
