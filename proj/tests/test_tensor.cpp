#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "ncdeon/tensor.hpp"

using namespace ncdeon;

TEST_CASE("matmul small hand example") {
  // [[1,2],[3,4]] x [[5,6],[7,8]] = [[19,22],[43,50]]
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {5, 6, 7, 8});
  Tensor c = ops::matmul(a, b);
  CHECK(c[0] == 19.0);
  CHECK(c[1] == 22.0);
  CHECK(c[2] == 43.0);
  CHECK(c[3] == 50.0);
}

TEST_CASE("matmul variants agree with an index-loop oracle") {
  std::mt19937_64 g(7);
  for (int trial = 0; trial < 5; ++trial) {
    int m = 2 + (int)(g() % 6), k = 2 + (int)(g() % 6), n = 2 + (int)(g() % 6);
    Tensor a = gradcheck::random_tensor({m, k}, g);
    Tensor b = gradcheck::random_tensor({k, n}, g);
    Tensor c = ops::matmul(a, b);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int l = 0; l < k; ++l) s += a.at(i, l) * b.at(l, j);
        CHECK(std::fabs(c.at(i, j) - s) <= 1e-12 * std::max(1.0, std::fabs(s)));
      }
    // a^T path: matmul_tn(a', b) with a' = transpose copy must match
    Tensor at({k, m});
    for (int i = 0; i < m; ++i)
      for (int l = 0; l < k; ++l) at.at(l, i) = a.at(i, l);
    Tensor c2 = ops::matmul_tn(at, b);
    for (long long i = 0; i < c.numel(); ++i) CHECK(c2[i] == doctest::Approx(c[i]).epsilon(1e-14));
    Tensor bt({n, k});
    for (int l = 0; l < k; ++l)
      for (int j = 0; j < n; ++j) bt.at(j, l) = b.at(l, j);
    Tensor c3 = ops::matmul_nt(a, bt);
    for (long long i = 0; i < c.numel(); ++i) CHECK(c3[i] == doctest::Approx(c[i]).epsilon(1e-14));
  }
}

TEST_CASE("shape mismatches are rejected with informative errors") {
  Tensor a({2, 3});
  Tensor b({2, 3});
  Tensor c({3, 2});
  CHECK_THROWS_AS(ops::matmul(a, b), value_error);
  CHECK_NOTHROW(ops::matmul(a, c));
  CHECK_THROWS_AS(ops::add(a, c), value_error);
  CHECK_THROWS_AS(ops::slice_cols(a, 2, 2), value_error);
  CHECK_THROWS_AS(ops::slice_cols(a, 0, 4), value_error);
  CHECK_THROWS_AS(ops::layer_norm(a, Tensor({2}), Tensor({3}), 1e-5), value_error);
}

TEST_CASE("fast tanh matches std::tanh to near machine precision") {
  double worst = 0;
  for (int i = -40000; i <= 40000; ++i) {
    double x = i * 5e-4;  // [-20,20]
    worst = std::max(worst, std::fabs(fast_tanh(x) - std::tanh(x)));
  }
  CHECK(worst <= 5e-16);
  CHECK(fast_tanh(1e8) == 1.0);
  CHECK(fast_tanh(-1e8) == -1.0);
}

TEST_CASE("gelu derivative is the exact derivative of our gelu") {
  for (double x : {-3.0, -1.0, -0.1, 0.0, 0.4, 1.7, 3.2}) {
    double h = 1e-6;
    double fd = (gelu(x + h) - gelu(x - h)) / (2 * h);
    CHECK(std::fabs(fd - gelu_grad(x)) <= 1e-8);
  }
  CHECK(gelu(0.0) == 0.0);
}

TEST_CASE("layer_norm rows have zero mean and unit variance") {
  std::mt19937_64 g(11);
  Tensor x = gradcheck::random_tensor({4, 16}, g);
  Tensor gain = Tensor::full({16}, 1.0);
  Tensor bias({16});
  Tensor y = ops::layer_norm(x, gain, bias, 1e-5);
  for (int r = 0; r < 4; ++r) {
    double mu = 0, var = 0;
    for (int j = 0; j < 16; ++j) mu += y.at(r, j);
    mu /= 16;
    for (int j = 0; j < 16; ++j) var += (y.at(r, j) - mu) * (y.at(r, j) - mu);
    var /= 16;
    CHECK(std::fabs(mu) <= 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps=1e-5 shifts it slightly
  }
}

TEST_CASE("contract_path equals the blockwise matrix-vector oracle") {
  std::mt19937_64 g(23);
  int B = 3, d = 4, dp = 2;
  Tensor F = gradcheck::random_tensor({B, d * dp}, g);
  Tensor xd = gradcheck::random_tensor({B, dp}, g);
  Tensor out = ops::contract_path(F, xd, d, dp);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < d; ++i) {
      double s = 0;
      for (int j = 0; j < dp; ++j) s += F[b * d * dp + i * dp + j] * xd[b * dp + j];
      CHECK(out[b * d + i] == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("donet_head equals per-sample inner products") {
  std::mt19937_64 g(29);
  int S = 2, c = 3, h = 5, q = 4;
  Tensor b = gradcheck::random_tensor({S, c * h}, g);
  Tensor tr = gradcheck::random_tensor({S * q, h}, g);
  Tensor out = ops::donet_head(b, tr, c, h, q);
  REQUIRE(out.shape() == std::vector<int>{S * q, c});
  for (int s = 0; s < S; ++s)
    for (int r = 0; r < q; ++r)
      for (int k = 0; k < c; ++k) {
        double acc = 0;
        for (int i = 0; i < h; ++i)
          acc += b[s * c * h + k * h + i] * tr[(s * q + r) * h + i];
        CHECK(out[(s * q + r) * c + k] == doctest::Approx(acc).epsilon(1e-14));
      }
}

TEST_CASE("sum/mean/max_abs and finiteness checks") {
  Tensor t({2, 2}, {1, -2, 3, -4});
  CHECK(ops::sum(t) == -2.0);
  CHECK(ops::mean(t) == -0.5);
  CHECK(ops::max_abs(t) == 4.0);
  CHECK(ops::all_finite(t));
  t[2] = std::nan("");
  CHECK_FALSE(ops::all_finite(t));
  CHECK_THROWS_AS(ops::ensure_finite(t, "unit"), numeric_error);
}

TEST_CASE("tensor buffers are 64-byte aligned") {
  for (int n : {1, 7, 33, 1000}) {
    Tensor t({n});
    CHECK(reinterpret_cast<uintptr_t>(t.data()) % 64 == 0);
  }
}
