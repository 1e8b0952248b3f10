#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ncdeon/dataset.hpp"
#include "ncdeon/tensor.hpp"

namespace ncdeon {

// Random boundary-signal families.  Both start at exactly 0 at t=0 and stay
// within [-amplitude, amplitude] (fourier: verified on a dense grid and
// rescaled; pwl: bounded by its knot values).
struct SignalConfig {
  std::string family = "fourier";  // fourier | pwl
  int max_modes = 5;
  double band_lo = 0.25, band_hi = 2.0;  // cycles per unit time
  int knots_min = 4, knots_max = 10;     // pwl
  double amplitude = 1.0;
};

// Continuous representation of a sampled boundary signal; the solver
// evaluates it at substep times, the dataset samples it at save times.
struct BcSignal {
  std::string family;
  std::vector<double> amps, freqs, phases;  // fourier
  std::vector<double> knot_t, knot_v;       // pwl
  double scale = 1.0, offset = 0.0;         // fourier post-processing
  double eval(double t) const;
};

BcSignal sample_signal(const SignalConfig&, double t_end, std::mt19937_64&);

// Transient diffusion u_t = lap(u) on the unit square, u(x,0)=0, with
// u=0 on the left edge, u=bc(t) on the right edge and homogeneous Neumann
// on top/bottom.  Backward Euler + 5-point Laplacian on an nx x ny NODE
// grid, matrix-free CG (the Neumann rows are half-weighted so the system is
// symmetric positive definite).  Returns (n_saves, nx*ny) node values with
// point index p = j*nx + i, including the t=0 snapshot.
struct PoissonConfig {
  int nx = 32, ny = 32;
  double t_end = 2.0;
  int n_saves = 99;   // uniformly spaced, first at t=0
  int substeps = 4;   // solver steps per save interval
  double cg_tol = 1e-10;
  int cg_max_iter = 20000;
};

Tensor solve_poisson(const PoissonConfig&, const BcSignal& bc);

struct GenConfig {
  int n_train = 400, n_test = 100;
  SignalConfig sig;
  PoissonConfig pde;
  uint64_t seed = 2024;
  int threads = 1;
};

// Generates both splits.  Per-sample RNG streams are derived from the seed
// and the global sample index, so results are independent of thread count
// and the test split never reuses a training signal.  Normalization
// constants come from the train split only and are stored in both files.
std::pair<OperatorDataset, OperatorDataset> build_dataset(const GenConfig&);

}  // namespace ncdeon
