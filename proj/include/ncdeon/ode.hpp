#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ncdeon/tensor.hpp"

namespace ncdeon {

enum class Method { Euler, Rk4, Tsit5 };

Method method_from_string(const std::string& s);
std::string method_to_string(Method m);

struct SolverConfig {
  Method method = Method::Tsit5;
  double rtol = 1e-4;
  double atol = 1e-7;
  int max_steps = 50000;
  int n_steps = 64;  // fixed-step count (fixed-step entry points only)
};

// rhs writes dy (length n) given t and y (length n)
using Rhs = std::function<void(double t, const double* y, double* dy)>;

struct OdeResult {
  Tensor y;           // state at t1
  int steps = 0;      // accepted steps
  int rejected = 0;   // adaptive only
};

// Thrown by the adaptive loop when the state goes non-finite and the step
// cannot recover; carries the offending state so callers can classify which
// components blew up (the adjoint uses this to give a precise diagnosis).
struct solver_blowup : numeric_error {
  solver_blowup(const std::string& msg, Tensor state, double at)
      : numeric_error(msg), y(std::move(state)), t(at) {}
  Tensor y;
  double t;
};

// n uniform steps from t0 to t1 (t1 < t0 integrates backward).  Any of the
// three methods; Tsit5 here means its 7-stage scheme with the 5th-order
// weights.  Errors with the step index if the state goes non-finite.
// If save_all, appends the state after every step (y0 first) to trace.
OdeResult integrate_fixed(const Rhs& f, int n_state, double t0, double t1,
                          const Tensor& y0, Method method, int n_steps,
                          std::vector<Tensor>* trace = nullptr);

// Adaptive Tsitouras 5(4) with PI step control, FSAL, and 4th-order dense
// output.  t_eval (if given) must be sorted in integration direction and lie
// inside [t0,t1]; interpolated states are appended to y_eval.
// Errors: max_steps exceeded (message includes the step size being
// attempted), step size underflow, unrecoverable non-finite state.
OdeResult integrate_adaptive(const Rhs& f, int n_state, double t0, double t1,
                             const Tensor& y0, const SolverConfig& cfg,
                             const std::vector<double>* t_eval = nullptr,
                             std::vector<Tensor>* y_eval = nullptr);

}  // namespace ncdeon
