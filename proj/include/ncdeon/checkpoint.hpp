#pragma once

#include <string>
#include <vector>

#include "ncdeon/model.hpp"
#include "ncdeon/ode.hpp"

namespace ncdeon {

inline constexpr const char* kCheckpointMagic = "ncdeon-ckpt-v1";

// A trained model plus everything inference needs: dimensions, the
// normalization constants of the dataset it was trained on, the solver
// settings, the seed it was built from, and (for the spatial-only trunk)
// the training time grid.  Serialization is byte-exact round-trip.
struct Checkpoint {
  OperatorModel model;
  ModelSpec spec;
  uint64_t seed = 0;
  std::vector<double> norm_in, norm_out;
  double time_offset = 0.0, time_scale = 1.0;
  std::vector<double> train_times;  // normalized; spatial-only trunk grid
  SolverConfig solver;
  std::string grad_mode = "tape";
  double final_train_loss = -1.0;   // <0 means "not trained"
};

void save_checkpoint(const Checkpoint&, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ncdeon
