#pragma once

#include <random>

#include "ncdeon/tensor.hpp"

namespace ncdeon {

// y = x W + b with W stored (in, out) row-major
struct Affine {
  Tensor W, b;
  int in() const { return W.dim(0); }
  int out() const { return W.dim(1); }
};

// Glorot/Xavier uniform: U(+-sqrt(6/(fan_in+fan_out))), zero bias
Affine glorot_affine(int in, int out, std::mt19937_64& g);

// random orthogonal (n,n) via Householder QR of a Gaussian matrix,
// sign-fixed so the result is deterministic
Tensor orthogonal(int n, std::mt19937_64& g);

Tensor affine_apply(const Affine& a, const Tensor& x);

}  // namespace ncdeon
