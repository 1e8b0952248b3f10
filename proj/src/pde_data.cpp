#include "ncdeon/pde_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace ncdeon {

double BcSignal::eval(double t) const {
  if (family == "fourier") {
    double s = 0;
    for (size_t k = 0; k < amps.size(); ++k)
      s += amps[k] * std::sin(2.0 * M_PI * freqs[k] * t + phases[k]);
    return scale * (s - offset);
  }
  // piecewise linear
  if (t <= knot_t.front()) return knot_v.front();
  if (t >= knot_t.back()) return knot_v.back();
  int k = (int)(std::upper_bound(knot_t.begin(), knot_t.end(), t) -
                knot_t.begin()) - 1;
  double w = (t - knot_t[k]) / (knot_t[k + 1] - knot_t[k]);
  return knot_v[k] + w * (knot_v[k + 1] - knot_v[k]);
}

BcSignal sample_signal(const SignalConfig& sc, double t_end,
                       std::mt19937_64& g) {
  if (sc.amplitude <= 0) throw value_error("sample_signal: amplitude must be > 0");
  BcSignal s;
  s.family = sc.family;
  if (sc.family == "fourier") {
    if (sc.max_modes < 1) throw value_error("sample_signal: max_modes must be >= 1");
    std::uniform_int_distribution<int> nm(1, sc.max_modes);
    std::uniform_real_distribution<double> ua(-1.0, 1.0);
    std::uniform_real_distribution<double> uf(sc.band_lo, sc.band_hi);
    std::uniform_real_distribution<double> up(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> us(0.4, 1.0);
    int K = nm(g);
    for (int k = 0; k < K; ++k) {
      s.amps.push_back(ua(g));
      s.freqs.push_back(uf(g));
      s.phases.push_back(up(g));
    }
    double target = sc.amplitude * us(g);
    // center so s(0)=0, then rescale the dense max to the target amplitude
    s.scale = 1.0;
    s.offset = 0.0;
    s.offset = s.eval(0.0);
    double mx = 0;
    for (int i = 0; i <= 2000; ++i)
      mx = std::max(mx, std::fabs(s.eval(t_end * i / 2000.0)));
    s.scale = mx > 0 ? target / mx : 1.0;
  } else if (sc.family == "pwl") {
    if (sc.knots_min < 2 || sc.knots_max < sc.knots_min)
      throw value_error("sample_signal: bad pwl knot range");
    std::uniform_int_distribution<int> nk(sc.knots_min, sc.knots_max);
    std::uniform_real_distribution<double> uv(-sc.amplitude, sc.amplitude);
    std::uniform_real_distribution<double> ut(0.0, 1.0);
    int K = nk(g);
    std::vector<double> ts;
    ts.push_back(0.0);
    ts.push_back(1.0);
    for (int k = 0; k < K - 2; ++k) ts.push_back(ut(g));
    std::sort(ts.begin(), ts.end());
    // nudge duplicates apart (measure-zero event, but be safe)
    for (size_t i = 1; i < ts.size(); ++i)
      if (ts[i] <= ts[i - 1]) ts[i] = std::nextafter(ts[i - 1], 2.0);
    for (double t : ts) {
      s.knot_t.push_back(t * t_end);
      s.knot_v.push_back(uv(g));
    }
    s.knot_v[0] = 0.0;  // s(0) = 0
  } else {
    throw value_error("sample_signal: unknown family '" + sc.family +
                      "' (fourier|pwl)");
  }
  return s;
}

namespace {

// matrix-free operator for one backward-Euler step.  Unknowns: all nodes
// with 1 <= i <= nx-2 (x-interior), every j; vector index m = j*(nx-2)+(i-1).
// Rows at j=0 and j=ny-1 are scaled by 1/2 (Neumann ghost reflection makes
// the raw matrix nonsymmetric; half-weighting restores SPD).
struct StepOp {
  int nx, ny;
  double ihx2, ihy2, idt;
  int nu() const { return (nx - 2) * ny; }
  double w(int j) const { return (j == 0 || j == ny - 1) ? 0.5 : 1.0; }

  void apply(const double* u, double* out) const {
    int m = nx - 2;
    for (int j = 0; j < ny; ++j) {
      for (int q = 0; q < m; ++q) {
        double c = u[j * m + q];
        double left = q > 0 ? u[j * m + q - 1] : 0.0;   // Dirichlet col handled in rhs
        double right = q < m - 1 ? u[j * m + q + 1] : 0.0;
        double down = j > 0 ? u[(j - 1) * m + q] : u[(j + 1) * m + q];  // reflect
        double up = j < ny - 1 ? u[(j + 1) * m + q] : u[(j - 1) * m + q];
        double lap = (2.0 * c - left - right) * ihx2 + (2.0 * c - down - up) * ihy2;
        out[j * m + q] = w(j) * (c * idt + lap);
      }
    }
  }
};

// CG to relative residual tol; returns iterations, throws on stagnation
int cg_solve(const StepOp& op, const dvec& b, dvec& x, double tol, int max_iter) {
  int n = op.nu();
  double bn = 0;
  for (int i = 0; i < n; ++i) bn += b[i] * b[i];
  bn = std::sqrt(bn);
  if (bn == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    return 0;
  }
  dvec r(b), p(n, 0.0), ap(n, 0.0);
  op.apply(x.data(), ap.data());
  for (int i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  p.assign(r.begin(), r.end());
  double rr = 0;
  for (int i = 0; i < n; ++i) rr += r[i] * r[i];
  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) <= tol * bn) return it;
    op.apply(p.data(), ap.data());
    double pap = 0;
    for (int i = 0; i < n; ++i) pap += p[i] * ap[i];
    if (!(pap > 0))
      throw numeric_error("cg_solve: operator lost positive definiteness");
    double alpha = rr / pap;
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    double rr2 = 0;
    for (int i = 0; i < n; ++i) rr2 += r[i] * r[i];
    double beta = rr2 / rr;
    rr = rr2;
    for (int i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  throw numeric_error(strf("cg_solve: no convergence in %d iterations "
                           "(relative residual %.3g)", max_iter,
                           std::sqrt(rr) / bn));
}

}  // namespace

Tensor solve_poisson(const PoissonConfig& pc, const BcSignal& bc) {
  if (pc.nx < 8 || pc.ny < 8)
    throw value_error(strf("solve_poisson: grid %dx%d too coarse (need >= 8)",
                           pc.nx, pc.ny));
  if (pc.n_saves < 2 || pc.substeps < 1 || pc.t_end <= 0)
    throw value_error("solve_poisson: bad time discretization");
  int nx = pc.nx, ny = pc.ny;
  double hx = 1.0 / (nx - 1), hy = 1.0 / (ny - 1);
  double dt = pc.t_end / ((pc.n_saves - 1) * (double)pc.substeps);
  StepOp op{nx, ny, 1.0 / (hx * hx), 1.0 / (hy * hy), 1.0 / dt};
  int m = nx - 2;
  dvec u(op.nu(), 0.0), rhs(op.nu(), 0.0);

  Tensor out({pc.n_saves, nx * ny});
  auto emit = [&](int s, double t) {
    double g = bc.eval(t);
    double* row = out.data() + (long long)s * nx * ny;
    for (int j = 0; j < ny; ++j) {
      row[j * nx + 0] = 0.0;
      for (int q = 0; q < m; ++q) row[j * nx + 1 + q] = u[j * m + q];
      row[j * nx + nx - 1] = g;
    }
  };
  emit(0, 0.0);

  double save_dt = pc.t_end / (pc.n_saves - 1);
  for (int s = 1; s < pc.n_saves; ++s) {
    for (int sub = 1; sub <= pc.substeps; ++sub) {
      double t_new = (s - 1) * save_dt + sub * dt;
      if (sub == pc.substeps) t_new = s * save_dt;  // exact save time
      double g = bc.eval(t_new);
      for (int j = 0; j < ny; ++j)
        for (int q = 0; q < m; ++q) {
          double r = u[j * m + q] * op.idt;
          if (q == m - 1) r += g * op.ihx2;  // Dirichlet right edge
          rhs[j * m + q] = op.w(j) * r;
        }
      cg_solve(op, rhs, u, pc.cg_tol, pc.cg_max_iter);
    }
    emit(s, s * save_dt);
  }
  return out;
}

std::pair<OperatorDataset, OperatorDataset> build_dataset(const GenConfig& gc) {
  if (gc.n_train < 1 || gc.n_test < 1)
    throw value_error("build_dataset: need n_train >= 1 and n_test >= 1");
  int N = gc.n_train + gc.n_test;
  int T = gc.pde.n_saves;
  int P = gc.pde.nx * gc.pde.ny;
  double save_dt = gc.pde.t_end / (T - 1);

  std::vector<TimeSeriesSignal> sigs(N);
  std::vector<Tensor> fields(N);
  parallel_for(N, gc.threads, [&](int i) {
    std::mt19937_64 g(derive_seed(gc.seed, 1, (uint64_t)i));
    BcSignal bc = sample_signal(gc.sig, gc.pde.t_end, g);
    fields[i] = solve_poisson(gc.pde, bc);
    TimeSeriesSignal& s = sigs[i];
    s.times.resize(T);
    s.values = Tensor({T, 1});
    for (int k = 0; k < T; ++k) {
      s.times[k] = k * save_dt;
      s.values.at(k, 0) = bc.eval(k * save_dt);
    }
  });

  // normalization from the train split only
  double mx_in = 0, mx_out = 0;
  for (int i = 0; i < gc.n_train; ++i) {
    mx_in = std::max(mx_in, ops::max_abs(sigs[i].values));
    mx_out = std::max(mx_out, ops::max_abs(fields[i]));
  }
  if (mx_in == 0) mx_in = 1.0;
  if (mx_out == 0) mx_out = 1.0;

  auto make_split = [&](int lo, int hi, const char* name) {
    OperatorDataset ds;
    ds.c = 1;
    ds.norm_in = {mx_in};
    ds.norm_out = {mx_out};
    ds.time_offset = 0.0;
    ds.time_scale = gc.pde.t_end;
    ds.query_points = Tensor({P, 2});
    double hx = 1.0 / (gc.pde.nx - 1), hy = 1.0 / (gc.pde.ny - 1);
    for (int j = 0; j < gc.pde.ny; ++j)
      for (int i = 0; i < gc.pde.nx; ++i) {
        ds.query_points.at(j * gc.pde.nx + i, 0) = i * hx;
        ds.query_points.at(j * gc.pde.nx + i, 1) = j * hy;
      }
    ds.query_times.resize(T);
    for (int k = 0; k < T; ++k) ds.query_times[k] = (double)k / (T - 1);
    int n = hi - lo;
    ds.targets = Tensor({n, T * P});
    for (int i = lo; i < hi; ++i) {
      TimeSeriesSignal s = sigs[i];
      s.times = ds.query_times;  // identical normalized grid, bit for bit
      for (long long k = 0; k < s.values.numel(); ++k) s.values[k] /= mx_in;
      ds.signals.push_back(std::move(s));
      double* row = ds.targets.data() + (long long)(i - lo) * T * P;
      const double* src = fields[i].data();
      for (long long k = 0; k < (long long)T * P; ++k) row[k] = src[k] / mx_out;
    }
    ds.meta["split"] = name;
    ds.meta["pde"] = "transient-poisson";
    ds.meta["family"] = gc.sig.family;
    ds.meta["nx"] = std::to_string(gc.pde.nx);
    ds.meta["ny"] = std::to_string(gc.pde.ny);
    ds.meta["t_end"] = dbl_str(gc.pde.t_end);
    ds.meta["substeps"] = std::to_string(gc.pde.substeps);
    ds.meta["seed"] = std::to_string(gc.seed);
    ds.meta["amplitude"] = dbl_str(gc.sig.amplitude);
    ds.validate();
    return ds;
  };
  return {make_split(0, gc.n_train, "train"),
          make_split(gc.n_train, N, "test")};
}

}  // namespace ncdeon
