#pragma once

#include <string>
#include <vector>

#include "ncdeon/checkpoint.hpp"
#include "ncdeon/dataset.hpp"
#include "ncdeon/model.hpp"
#include "ncdeon/ode.hpp"

namespace ncdeon {

enum class GradMode { Tape, Adjoint };

struct TrainConfig {
  int epochs = 300;
  int batch_size = 128;
  int queries_per_sample = 256;  // spacetime: random (x,y,t) per sample;
                                 // spatial: random x,y shared per step
  double lr_init = 1e-3;
  double lr_final = 1e-5;
  double warmup_frac = 0.05;     // fraction of total steps, in [0,1)
  uint64_t seed = 2024;
  GradMode grad = GradMode::Tape;
  Method tape_method = Method::Rk4;
  int tape_steps = 64;           // fixed grid steps on [0,1] (spacetime)
  int chunk = 32;                // samples per tape
  SolverConfig adjoint_solver;   // adaptive solves in adjoint mode
};

// warmup-cosine schedule over [0,total): linear 0 -> lr_init during the
// first round(warmup_frac*total) steps, then cosine lr_init -> lr_final.
double lr_at(long long step, long long total, const TrainConfig&);

// Adam with bias correction; update order follows named_params.  Throws
// numeric_error naming the parameter if its gradient is non-finite.
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Tensor> m, v;
  long long t = 0;
  void init(const std::vector<NamedParam>& ps);
  void step(const std::vector<NamedParam>& ps, const std::vector<Tensor>& grads,
            double lr);
};

struct TrainResult {
  double final_loss = -1.0;
  long long steps = 0;
  std::vector<std::string> log_lines;  // "step epoch lr loss" per step
};

// Trains the model in place on the dataset's train split.  Rejected
// combinations (defined errors): GRU + adjoint, spatial trunk + adjoint.
TrainResult train(OperatorModel&, const OperatorDataset&, const TrainConfig&);

}  // namespace ncdeon
