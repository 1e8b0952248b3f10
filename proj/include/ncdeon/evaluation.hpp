#pragma once

#include <array>
#include <string>
#include <vector>

#include "ncdeon/checkpoint.hpp"
#include "ncdeon/dataset.hpp"
#include "ncdeon/model.hpp"

namespace ncdeon {

// ||pred - ref||_2 / ||ref||_2 over all entries jointly; throws if the
// reference norm is zero (the ratio would be meaningless)
double relative_l2(const Tensor& pred, const Tensor& ref);

// linear-interpolation percentile of an unsorted sample, p in [0,100]
double percentile(std::vector<double> vals, double p);

inline constexpr std::array<double, 7> kReportPcts = {0, 10, 25, 50, 75, 90, 100};

struct ErrorReport {
  std::vector<double> per_sample;  // relative L2, denormalized fields
  double mean = 0, median = 0;
  std::array<double, 7> pct{};     // at kReportPcts
};

// Full-grid errors on every sample of the dataset.  Spacetime models are
// queried at all (x,y,t); spatial-only models at all grid times via the
// latent trajectory.  Branch solves run under `solver`.
ErrorReport error_report(const OperatorModel&, const OperatorDataset&,
                         const SolverConfig& solver, int threads);

// Hermite resampling of a signal: factor 0.5 keeps every second knot (always
// retaining both endpoints), factor 2.0 inserts interpolated midpoints,
// factor 1.0 is the identity.  Other factors are out of scope and rejected.
TimeSeriesSignal resample_signal(const TimeSeriesSignal&, double factor);

struct ResampleReport {
  std::vector<double> disc_half, disc_double;  // vs native predictions
  int knots_half = 0, knots_native = 0, knots_double = 0;
  double frac_ok_half = 0, frac_ok_double = 0;  // fraction <= tol
  double tol = 5e-2;
};

// Re-predicts every sample from signals resampled at half and double rate
// and reports the relative L2 discrepancy against the native prediction
// (denormalized).  NCDE only: the GRU consumes a fixed-length value sequence
// and is rejected with a defined error.
ResampleReport resolution_experiment(const OperatorModel&, const OperatorDataset&,
                                     const SolverConfig&, double tol, int threads);

// deterministic text/json report renderings (all doubles %.17g)
std::string error_report_text(const ErrorReport&);
std::string error_report_json(const ErrorReport&);
std::string resample_report_text(const ResampleReport&);
std::string resample_report_json(const ResampleReport&);

}  // namespace ncdeon
