#include "ncdeon/control_path.hpp"

#include <algorithm>
#include <cmath>

namespace ncdeon {

ControlPath build_path(const TimeSeriesSignal& sig) {
  int n = sig.n_obs();
  if (n < 2)
    throw value_error(strf("build_path: need at least 2 observations, got %d", n));
  if (sig.values.rank() != 2 || sig.values.dim(0) != n)
    throw value_error("build_path: values must be (n_obs, d_in), got " +
                      shape_str(sig.values) + strf(" with %d times", n));
  for (int k = 1; k < n; ++k)
    if (!(sig.times[k] > sig.times[k - 1]))
      throw value_error(strf(
          "build_path: times must be strictly increasing; violated at index %d "
          "(%.17g after %.17g)", k, sig.times[k], sig.times[k - 1]));
  for (double t : sig.times)
    if (!std::isfinite(t)) throw value_error("build_path: non-finite time");
  ops::ensure_finite(sig.values, "build_path observations");

  int d = sig.d_in();
  ControlPath p;
  p.times = sig.times;
  p.values = sig.values;
  p.d_in = d;
  p.tangents = Tensor({n, d});
  for (int c = 0; c < d; ++c) {
    auto y = [&](int k) { return sig.values.at(k, c); };
    // one-sided at the ends
    p.tangents.at(0, c) = (y(1) - y(0)) / (sig.times[1] - sig.times[0]);
    p.tangents.at(n - 1, c) =
        (y(n - 1) - y(n - 2)) / (sig.times[n - 1] - sig.times[n - 2]);
    for (int k = 1; k < n - 1; ++k) {
      double h0 = sig.times[k] - sig.times[k - 1];
      double h1 = sig.times[k + 1] - sig.times[k];
      p.tangents.at(k, c) =
          (h1 * h1 * (y(k) - y(k - 1)) + h0 * h0 * (y(k + 1) - y(k))) /
          (h0 * h1 * (h0 + h1));
    }
  }
  return p;
}

namespace {

// index k of the interval [t_k, t_{k+1}) containing t (t inside domain)
int find_interval(const std::vector<double>& ts, double t) {
  int k = (int)(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin()) - 1;
  if (k < 0) k = 0;
  if (k > (int)ts.size() - 2) k = (int)ts.size() - 2;
  return k;
}

}  // namespace

void ControlPath::eval(double t, double* out, bool* clamped) const {
  bool clip = false;
  if (t < times.front()) { t = times.front(); clip = true; }
  if (t > times.back()) { t = times.back(); clip = true; }
  if (clamped) *clamped = clip;
  int k = find_interval(times, t);
  double h = times[k + 1] - times[k];
  double s = t - times[k];
  for (int c = 0; c < d_in; ++c) {
    double y0 = values.at(k, c), y1 = values.at(k + 1, c);
    double m0 = tangents.at(k, c), m1 = tangents.at(k + 1, c);
    double delta = (y1 - y0) / h;
    double c2 = (3.0 * delta - 2.0 * m0 - m1) / h;
    double c3 = (m0 + m1 - 2.0 * delta) / (h * h);
    out[c] = y0 + s * (m0 + s * (c2 + s * c3));
  }
  out[d_in] = t;  // time channel, exact
}

void ControlPath::deriv(double t, double* out, bool* clamped) const {
  bool clip = (t < times.front()) || (t > times.back());
  if (clamped) *clamped = clip;
  if (clip) {  // constant extension beyond the domain
    for (int c = 0; c <= d_in; ++c) out[c] = 0.0;
    return;
  }
  int k = find_interval(times, t);
  double h = times[k + 1] - times[k];
  double s = t - times[k];
  for (int c = 0; c < d_in; ++c) {
    double y0 = values.at(k, c), y1 = values.at(k + 1, c);
    double m0 = tangents.at(k, c), m1 = tangents.at(k + 1, c);
    double delta = (y1 - y0) / h;
    double c2 = (3.0 * delta - 2.0 * m0 - m1) / h;
    double c3 = (m0 + m1 - 2.0 * delta) / (h * h);
    out[c] = m0 + s * (2.0 * c2 + s * 3.0 * c3);
  }
  out[d_in] = 1.0;
}

Tensor ControlPath::eval(double t) const {
  Tensor o({dim()});
  eval(t, o.data());
  return o;
}

Tensor ControlPath::deriv(double t) const {
  Tensor o({dim()});
  deriv(t, o.data());
  return o;
}

}  // namespace ncdeon
