#pragma once

#include <vector>

#include "ncdeon/tensor.hpp"

namespace ncdeon {

// An observed time series: strictly increasing times, one row of channel
// values per observation.
struct TimeSeriesSignal {
  std::vector<double> times;
  Tensor values;  // (n, d_in)

  int n_obs() const { return (int)times.size(); }
  int d_in() const { return values.rank() == 2 ? values.dim(1) : 0; }
};

// Piecewise cubic Hermite interpolant of a signal, augmented with a time
// channel appended as the LAST coordinate so the control X(t) = (s(t), t)
// carries monotone time through the CDE.  The time channel is exact: eval
// returns precisely t and deriv precisely 1 (no interpolation roundoff).
//
// Tangents: centered non-uniform 3-point differences in the interior,
// one-sided first-order differences at the two endpoints.
//
// Queries outside [t0, t1] clamp to the nearest endpoint; eval returns the
// endpoint state and deriv returns zeros (constant extension) and both set
// the optional out-of-domain flag.
struct ControlPath {
  std::vector<double> times;
  Tensor values;    // (n, d_in)
  Tensor tangents;  // (n, d_in)
  int d_in = 0;

  int dim() const { return d_in + 1; }
  double t_begin() const { return times.front(); }
  double t_end() const { return times.back(); }

  void eval(double t, double* out, bool* clamped = nullptr) const;
  void deriv(double t, double* out, bool* clamped = nullptr) const;
  Tensor eval(double t) const;
  Tensor deriv(double t) const;
};

// Builds the interpolant.  Errors: fewer than 2 observations; times not
// strictly increasing (message names the offending index); non-finite or
// shape-mismatched values.
ControlPath build_path(const TimeSeriesSignal& sig);

}  // namespace ncdeon
