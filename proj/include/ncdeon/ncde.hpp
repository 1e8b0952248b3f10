#pragma once

#include <array>
#include <random>
#include <vector>

#include "ncdeon/control_path.hpp"
#include "ncdeon/nn.hpp"
#include "ncdeon/ode.hpp"
#include "ncdeon/tape.hpp"

namespace ncdeon {

// Latent dynamics  dz = f_theta(z) dX(t):  the field maps z (d) to a matrix
// (d, d_path) read off row-major from the MLP output, and the increment is
// its product with dX.  Hidden activations gelu; the final activation is
// tanh, so every field entry lies in (-1,1) and the dynamics cannot blow up
// on a bounded path.  z(t0) = init(X(t0)).
struct NcdeParams {
  int d = 64;
  int d_path = 2;
  int width = 200;
  int depth = 6;  // number of affine layers in the field
  Affine init;
  std::vector<Affine> field;
};

NcdeParams make_ncde(int d, int d_path, int width, int depth, std::mt19937_64&);

// flat field-parameter count (layer order: W then b, layers in order)
int field_param_count(const NcdeParams&);

Tensor ncde_field(const NcdeParams&, const Tensor& z);      // (B,d) -> (B,d*d_path)
Tensor ncde_init_state(const NcdeParams&, const Tensor& x0);  // (B,d_path) -> (B,d)

struct NcdeForwardResult {
  Tensor zT;  // (d)
  int steps = 0;
  int rejected = 0;
};

// Integrate one sample over the path's domain with the adaptive solver
// (cfg.method==Tsit5) or fixed steps otherwise.  t_eval/z_eval: dense latent
// states at given times (spatial-only trunk needs the whole trajectory).
NcdeForwardResult ncde_forward(const NcdeParams&, const ControlPath&,
                               const SolverConfig&,
                               const std::vector<double>* t_eval = nullptr,
                               std::vector<Tensor>* z_eval = nullptr);

// Reverse pass through the field at a single latent row.  A is the cotangent
// on the field output (length d*d_path); writes dL/dz into gz (length d) and
// accumulates dL/dtheta into gtheta (field_param_count entries).  One sweep
// serves both the adjoint's a-equation and its p-equation.
void field_vjp(const NcdeParams&, const double* z, const double* A, double* gz,
               double* gtheta);

// Continuous adjoint: integrates the augmented system [z, a, p] from t_end
// back to t_begin with a(T) = dL/dz(T), p(T) = 0.  Returns dL/dz(t0), the
// flat field gradient, and the init-affine gradient.  Distinguishes latent
// reconstruction divergence from adjoint blow-up in its error messages.
struct AdjointResult {
  Tensor a0;
  Tensor gtheta;
  Affine ginit;
  int steps = 0;
};
AdjointResult ncde_adjoint(const NcdeParams&, const ControlPath&,
                           const Tensor& zT, const Tensor& aT,
                           const SolverConfig&);

// ---- batched fixed-step rollout on a tape (training path) ---------------

struct NcdeTapeLeaves {
  Tape::Var initW, initb;
  std::vector<std::array<Tape::Var, 2>> field;  // W,b per layer
};
NcdeTapeLeaves ncde_leaves(Tape&, const NcdeParams&);

struct NcdeTapeResult {
  Tape::Var zT;                     // (B,d) at the final grid point
  std::vector<Tape::Var> z_saved;   // (B,d) at save_idx grid points
};

// All samples share the time grid; each grid step runs one fixed solver step
// (euler/rk4/tsit5 stage combinations built from tape ops).  save_idx are
// grid-point indices whose latent states the caller wants recorded.
NcdeTapeResult ncde_tape_forward(Tape&, const NcdeParams&, const NcdeTapeLeaves&,
                                 const std::vector<const ControlPath*>& paths,
                                 const std::vector<double>& grid, Method method,
                                 const std::vector<int>& save_idx = {});

}  // namespace ncdeon
