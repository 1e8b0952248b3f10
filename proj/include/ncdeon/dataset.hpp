#pragma once

#include <map>
#include <string>
#include <vector>

#include "ncdeon/control_path.hpp"
#include "ncdeon/tensor.hpp"

namespace ncdeon {

inline constexpr const char* kDatasetMagic = "ncdeon-ds-v1";

// One split of an operator-learning dataset.  Everything is stored
// normalized: observation values and targets by per-channel train-split
// max-abs, times mapped to [0,1] (physical t = time_offset + time_scale*tau).
// Targets are laid out per sample as (n_times, n_points, c) flattened
// t-major.  All samples share the query grid; observation counts are uniform
// within a file.
struct OperatorDataset {
  std::vector<TimeSeriesSignal> signals;
  Tensor query_points;              // (P, 2) normalized (x,y)
  std::vector<double> query_times;  // (T) normalized
  Tensor targets;                   // (N, T*P*c)
  int c = 1;
  std::vector<double> norm_in;      // per input channel
  std::vector<double> norm_out;     // per output channel
  double time_offset = 0.0, time_scale = 1.0;
  std::map<std::string, std::string> meta;

  int n_samples() const { return (int)signals.size(); }
  int n_points() const { return query_points.rank() == 2 ? query_points.dim(0) : 0; }
  int n_times() const { return (int)query_times.size(); }
  long long target_cols() const { return (long long)n_times() * n_points() * c; }

  // throws value_error if shapes/N are inconsistent or norms non-positive
  void validate() const;
};

void save_dataset(const OperatorDataset&, const std::string& path);
OperatorDataset load_dataset(const std::string& path);

}  // namespace ncdeon
