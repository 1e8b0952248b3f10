#include "ncdeon/ode.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace ncdeon {

Method method_from_string(const std::string& s) {
  if (s == "euler") return Method::Euler;
  if (s == "rk4") return Method::Rk4;
  if (s == "tsit5") return Method::Tsit5;
  throw value_error("unknown solver method '" + s + "' (euler|rk4|tsit5)");
}

std::string method_to_string(Method m) {
  switch (m) {
    case Method::Euler: return "euler";
    case Method::Rk4: return "rk4";
    case Method::Tsit5: return "tsit5";
  }
  return "?";
}

namespace {

// Tsitouras 5(4) coefficients (the free parameters of the 2011 paper,
// written out in full precision).  a-rows sum to c, b sums to 1, btilde
// (the 5th-minus-4th-order defect weights) sums to 0.
constexpr double kC[7] = {0.0, 0.161, 0.327, 0.9,
                          0.9800255409045097, 1.0, 1.0};
constexpr double kA21 = 0.161;
constexpr double kA31 = -0.008480655492356989, kA32 = 0.335480655492357;
constexpr double kA41 = 2.8971530571054935, kA42 = -6.359448489975075,
                 kA43 = 4.3622954328695815;
constexpr double kA51 = 5.325864828439257, kA52 = -11.748883564062828,
                 kA53 = 7.4955393428898365, kA54 = -0.09249506636175525;
constexpr double kA61 = 5.86145544294642, kA62 = -12.92096931784711,
                 kA63 = 8.159367898576159, kA64 = -0.071584973281401,
                 kA65 = -0.028269050394068383;
constexpr double kB[7] = {0.09646076681806523, 0.01, 0.4798896504144996,
                          1.379008574103742, -3.290069515436081,
                          2.324710524099774, 0.0};
constexpr double kBt[7] = {-0.00178001105222577714, -0.0008164344596567469,
                           0.007880878010261995, -0.1447110071732629,
                           0.5823571654525552, -0.45808210592918697,
                           0.015151515151515152};

// 4th-order continuous extension: y(t0+theta*h) = y0 + h * sum_i btheta_i * k_i
void dense_weights(double th, double bw[7]) {
  bw[0] = -1.0530884977290216 * th * (th - 1.3299890189751412) *
          (th * th - 1.4364028541716351 * th + 0.7139816917074209);
  bw[1] = 0.1017 * th * th *
          (th * th - 2.1966568338249754 * th + 1.2949852507374631);
  bw[2] = 2.490627285651252793 * th * th *
          (th * th - 2.38535645472061657 * th + 1.57803468208092486);
  bw[3] = -16.54810288924490272 * (th - 1.21712927295533244) *
          (th - 0.61620406037800089) * th * th;
  bw[4] = 47.37952196281928122 * (th - 1.203071208372362603) *
          (th - 0.658047292653547382) * th * th;
  bw[5] = -34.87065786149660974 * (th - 1.2) *
          (th - 0.666666666666666667) * th * th;
  bw[6] = 2.5 * (th - 1.0) * (th - 0.6) * th * th;
}

bool finite_all(const double* p, int n) {
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

struct Work {
  // stage buffers for tsit5 / rk4
  std::vector<dvec> k;
  dvec tmp;
  Work(int stages, int n) : k(stages, dvec(n, 0.0)), tmp(n, 0.0) {}
};

void tsit5_stages(const Rhs& f, int n, double t, const double* y, double h,
                  Work& w, bool have_k1) {
  double* k1 = w.k[0].data();
  double* k2 = w.k[1].data();
  double* k3 = w.k[2].data();
  double* k4 = w.k[3].data();
  double* k5 = w.k[4].data();
  double* k6 = w.k[5].data();
  double* u = w.tmp.data();
  if (!have_k1) f(t, y, k1);
  for (int i = 0; i < n; ++i) u[i] = y[i] + h * kA21 * k1[i];
  f(t + kC[1] * h, u, k2);
  for (int i = 0; i < n; ++i) u[i] = y[i] + h * (kA31 * k1[i] + kA32 * k2[i]);
  f(t + kC[2] * h, u, k3);
  for (int i = 0; i < n; ++i)
    u[i] = y[i] + h * (kA41 * k1[i] + kA42 * k2[i] + kA43 * k3[i]);
  f(t + kC[3] * h, u, k4);
  for (int i = 0; i < n; ++i)
    u[i] = y[i] + h * (kA51 * k1[i] + kA52 * k2[i] + kA53 * k3[i] + kA54 * k4[i]);
  f(t + kC[4] * h, u, k5);
  for (int i = 0; i < n; ++i)
    u[i] = y[i] + h * (kA61 * k1[i] + kA62 * k2[i] + kA63 * k3[i] +
                       kA64 * k4[i] + kA65 * k5[i]);
  f(t + kC[5] * h, u, k6);
}

}  // namespace

OdeResult integrate_fixed(const Rhs& f, int n_state, double t0, double t1,
                          const Tensor& y0, Method method, int n_steps,
                          std::vector<Tensor>* trace) {
  if (n_steps < 1) throw value_error("integrate_fixed: n_steps must be >= 1");
  if (y0.numel() != n_state)
    throw value_error(strf("integrate_fixed: y0 has %lld entries, expected %d",
                           y0.numel(), n_state));
  int n = n_state;
  Tensor y = y0;
  if (trace) trace->push_back(y);
  double span = t1 - t0;
  Work w(7, n);
  for (int s = 0; s < n_steps; ++s) {
    // endpoints by construction, no drift
    double ta = t0 + span * ((double)s / n_steps);
    double tb = (s + 1 == n_steps) ? t1 : t0 + span * ((double)(s + 1) / n_steps);
    double h = tb - ta;
    double* py = y.data();
    switch (method) {
      case Method::Euler: {
        f(ta, py, w.k[0].data());
        for (int i = 0; i < n; ++i) py[i] += h * w.k[0][i];
        break;
      }
      case Method::Rk4: {
        double* k1 = w.k[0].data();
        double* k2 = w.k[1].data();
        double* k3 = w.k[2].data();
        double* k4 = w.k[3].data();
        double* u = w.tmp.data();
        f(ta, py, k1);
        for (int i = 0; i < n; ++i) u[i] = py[i] + 0.5 * h * k1[i];
        f(ta + 0.5 * h, u, k2);
        for (int i = 0; i < n; ++i) u[i] = py[i] + 0.5 * h * k2[i];
        f(ta + 0.5 * h, u, k3);
        for (int i = 0; i < n; ++i) u[i] = py[i] + h * k3[i];
        f(tb, u, k4);
        for (int i = 0; i < n; ++i)
          py[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        break;
      }
      case Method::Tsit5: {
        tsit5_stages(f, n, ta, py, h, w, false);
        for (int i = 0; i < n; ++i) {
          double acc = 0;
          for (int j = 0; j < 6; ++j) acc += kB[j] * w.k[j][i];
          py[i] += h * acc;
        }
        break;
      }
    }
    if (!finite_all(py, n))
      throw numeric_error(strf(
          "integrate_fixed: non-finite state after step %d (t=%.17g)", s + 1, tb));
    if (trace) trace->push_back(y);
  }
  OdeResult r;
  r.y = std::move(y);
  r.steps = n_steps;
  return r;
}

OdeResult integrate_adaptive(const Rhs& f, int n_state, double t0, double t1,
                             const Tensor& y0, const SolverConfig& cfg,
                             const std::vector<double>* t_eval,
                             std::vector<Tensor>* y_eval) {
  if (y0.numel() != n_state)
    throw value_error(strf("integrate_adaptive: y0 has %lld entries, expected %d",
                           y0.numel(), n_state));
  if (cfg.rtol <= 0 || cfg.atol <= 0)
    throw value_error("integrate_adaptive: tolerances must be positive");
  int n = n_state;
  double dir = (t1 >= t0) ? 1.0 : -1.0;
  double span = std::fabs(t1 - t0);
  if (span == 0.0) {
    OdeResult r;
    r.y = y0;
    if (t_eval)
      for (size_t i = 0; i < t_eval->size(); ++i)
        if (y_eval) y_eval->push_back(y0);
    return r;
  }

  Tensor y = y0;
  double t = t0;
  Work w(7, n);
  double* k1 = w.k[0].data();
  double* k7 = w.k[6].data();
  dvec ynew(n, 0.0), err(n, 0.0);
  dvec ksave(n, 0.0);

  f(t, y.data(), k1);
  if (!finite_all(k1, n))
    throw solver_blowup("integrate_adaptive: non-finite rhs at initial state", y, t);

  // initial step: Hairer-Norsett-Wanner heuristic
  double d0 = 0, d1 = 0;
  for (int i = 0; i < n; ++i) {
    double sc = cfg.atol + cfg.rtol * std::fabs(y[i]);
    double a = y[i] / sc, b = k1[i] / sc;
    d0 += a * a;
    d1 += b * b;
  }
  d0 = std::sqrt(d0 / n);
  d1 = std::sqrt(d1 / n);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, span);
  for (int i = 0; i < n; ++i) ynew[i] = y[i] + dir * h0 * k1[i];
  f(t + dir * h0, ynew.data(), w.tmp.data());
  double d2 = 0;
  for (int i = 0; i < n; ++i) {
    double sc = cfg.atol + cfg.rtol * std::fabs(y[i]);
    double df = (w.tmp[i] - k1[i]) / sc;
    d2 += df * df;
  }
  d2 = std::sqrt(d2 / n) / h0;
  double h1 = (std::max(d1, d2) <= 1e-15)
                  ? std::max(1e-6, h0 * 1e-3)
                  : std::pow(0.01 / std::max(d1, d2), 0.2);
  double h = std::min({100.0 * h0, h1, span});

  const double safety = 0.9, fac_min = 0.2, fac_max = 10.0;
  const double alpha = 0.7 / 5.0, beta = 0.4 / 5.0;
  double err_old = 1.0;
  size_t eval_pos = 0;
  auto eval_t0 = [&] {
    while (t_eval && eval_pos < t_eval->size() &&
           (*t_eval)[eval_pos] * dir <= t0 * dir) {
      if (y_eval) y_eval->push_back(y);
      ++eval_pos;
    }
  };
  eval_t0();

  OdeResult res;
  int attempts = 0;
  bool have_k1 = true;
  while (dir * (t1 - t) > 0) {
    if (++attempts > cfg.max_steps)
      throw numeric_error(strf(
          "integrate_adaptive: max_steps=%d exceeded at t=%.17g while "
          "attempting step size %.17g", cfg.max_steps, t, dir * h));
    if (h < 16.0 * 2.220446049250313e-16 * std::max(std::fabs(t), 1.0))
      throw solver_blowup(
          strf("integrate_adaptive: step size underflow at t=%.17g (h=%.3g)",
               t, h), y, t);
    bool last = false;
    if (h >= dir * (t1 - t)) {
      h = dir * (t1 - t);
      last = true;
    }
    double hd = dir * h;

    tsit5_stages(f, n, t, y.data(), hd, w, have_k1);
    for (int i = 0; i < n; ++i) {
      double acc = 0;
      for (int j = 0; j < 6; ++j) acc += kB[j] * w.k[j][i];
      ynew[i] = y[i] + hd * acc;
    }
    f(t + hd, ynew.data(), k7);  // FSAL stage; also the error stage 7
    double e = 0;
    bool ok = finite_all(ynew.data(), n) && finite_all(k7, n);
    if (ok) {
      for (int i = 0; i < n; ++i) {
        double de = 0;
        for (int j = 0; j < 7; ++j) de += kBt[j] * w.k[j][i];
        de *= hd;
        double sc = cfg.atol +
                    cfg.rtol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
        double r = de / sc;
        e += r * r;
      }
      e = std::sqrt(e / n);
      ok = std::isfinite(e);
    }

    if (ok && e <= 1.0) {
      // dense output inside (t, t+hd]
      if (t_eval) {
        while (eval_pos < t_eval->size()) {
          double te = (*t_eval)[eval_pos];
          if (dir * te > dir * (t + hd) + 1e-14 * span) break;
          double th = (te - t) / hd;
          th = std::min(std::max(th, 0.0), 1.0);
          double bw[7];
          dense_weights(th, bw);
          Tensor yi = y;
          for (int i = 0; i < n; ++i) {
            double acc = 0;
            for (int j = 0; j < 7; ++j) acc += bw[j] * w.k[j][i];
            yi[i] += hd * acc;
          }
          if (y_eval) y_eval->push_back(std::move(yi));
          ++eval_pos;
        }
      }
      t = last ? t1 : t + hd;
      std::memcpy(y.data(), ynew.data(), n * sizeof(double));
      std::memcpy(k1, k7, n * sizeof(double));  // FSAL
      have_k1 = true;
      ++res.steps;
      double el = std::max(e, 1e-10);
      double fac = safety * std::pow(el, -alpha) * std::pow(err_old, beta);
      fac = std::min(fac_max, std::max(fac_min, fac));
      h = h * fac;
      err_old = el;
    } else {
      ++res.rejected;
      if (!ok) {
        // state went non-finite; retry smaller, give up if hopeless
        if (h * fac_min < 1e-14 * span) {
          Tensor bad({n});
          std::memcpy(bad.data(), ynew.data(), n * sizeof(double));
          throw solver_blowup(
              strf("integrate_adaptive: state non-finite at t=%.17g and step "
                   "cannot shrink further", t), std::move(bad), t);
        }
        h *= fac_min;
      } else {
        double fac = safety * std::pow(std::max(e, 1e-10), -alpha);
        h *= std::min(1.0, std::max(fac_min, fac));
      }
      have_k1 = true;  // k1 still valid at unchanged (t, y)
    }
  }
  // flush eval points that coincide with t1 up to roundoff
  if (t_eval) {
    while (eval_pos < t_eval->size() &&
           dir * (*t_eval)[eval_pos] <= dir * t1 + 1e-12 * span) {
      if (y_eval) y_eval->push_back(y);
      ++eval_pos;
    }
    if (eval_pos < t_eval->size())
      throw value_error(strf(
          "integrate_adaptive: t_eval entry %.17g outside integration span",
          (*t_eval)[eval_pos]));
  }
  res.y = std::move(y);
  return res;
}

}  // namespace ncdeon
