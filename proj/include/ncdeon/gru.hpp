#pragma once

#include <array>
#include <random>
#include <vector>

#include "ncdeon/nn.hpp"
#include "ncdeon/tape.hpp"

namespace ncdeon {

// Stacked GRU over the observation VALUES only — by construction its output
// is invariant to the timestamps, which is exactly the weakness the CDE
// branch is meant to fix.  Standard gating:
//   r = sigmoid(x Wr + h Ur + br)
//   u = sigmoid(x Wz + h Uz + bz)
//   n = tanh(x Wn + (r . h) Un + bn)
//   h' = (1-u) . n + u . h
// Input matrices Glorot, recurrent matrices orthogonal, h0 = 0.
struct GruParams {
  int input = 1, hidden = 200, layers = 6;
  struct Cell {
    Affine wr, wz, wn;   // input->hidden (bias is the gate bias)
    Tensor ur, uz, un;   // hidden->hidden
  };
  std::vector<Cell> cells;
};

GruParams make_gru(int input, int hidden, int layers, std::mt19937_64&);

// values (T, input) -> final top-layer hidden state (hidden)
Tensor gru_forward(const GruParams&, const Tensor& values);

struct GruTapeLeaves {
  struct Cell {
    std::array<Tape::Var, 2> wr, wz, wn;  // W,b
    Tape::Var ur, uz, un;
  };
  std::vector<Cell> cells;
};
GruTapeLeaves gru_leaves(Tape&, const GruParams&);

// batched rollout: xs[t] is a (B,input) constant Var; returns final (B,hidden)
Tape::Var gru_tape_forward(Tape&, const GruParams&, const GruTapeLeaves&,
                           const std::vector<Tape::Var>& xs);

}  // namespace ncdeon
