#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "ncdeon/tape.hpp"

using namespace ncdeon;
using gradcheck::random_tensor;

TEST_CASE("gradients of every primitive match central differences") {
  std::mt19937_64 g(101);

  SUBCASE("linear + activations") {
    for (int trial = 0; trial < 8; ++trial) {
      Tensor x = random_tensor({3, 4}, g);
      Tensor w = random_tensor({4, 5}, g);
      Tensor b = random_tensor({5}, g);
      int which = trial % 4;
      gradcheck::check({x, w, b}, [which](Tape& t, const std::vector<Tape::Var>& v) {
        Tape::Var y = t.linear(v[0], v[1], v[2]);
        if (which == 0) y = t.tanh(y);
        if (which == 1) y = t.gelu(y);
        if (which == 2) y = t.sigmoid(y);
        return t.mean(t.mul(y, y));
      });
    }
  }

  SUBCASE("matmul / add / sub / mul / scale chains") {
    for (int trial = 0; trial < 6; ++trial) {
      Tensor a = random_tensor({3, 3}, g);
      Tensor b = random_tensor({3, 3}, g);
      gradcheck::check({a, b}, [](Tape& t, const std::vector<Tape::Var>& v) {
        Tape::Var p = t.matmul(v[0], v[1]);
        Tape::Var s = t.add(t.scale(v[0], 0.7), t.sub(p, t.mul(v[0], v[1])));
        Tape::Var s2 = t.scale_add(s, -1.3, 0.25);
        return t.sum(t.mul(s2, s2));
      });
    }
  }

  SUBCASE("weighted_sum (solver combine)") {
    Tensor a = random_tensor({2, 3}, g);
    Tensor b = random_tensor({2, 3}, g);
    Tensor c = random_tensor({2, 3}, g);
    gradcheck::check({a, b, c}, [](Tape& t, const std::vector<Tape::Var>& v) {
      Tape::Var w = t.weighted_sum({{0.5, v[0]}, {-1.25, v[1]}, {2.0, v[2]},
                                    {0.125, v[0]}});
      return t.mean(t.mul(w, w));
    });
  }

  SUBCASE("layer_norm") {
    for (int trial = 0; trial < 4; ++trial) {
      Tensor x = random_tensor({3, 6}, g);
      Tensor gain = random_tensor({6}, g, 0.5, 1.5);
      Tensor bias = random_tensor({6}, g, -0.5, 0.5);
      gradcheck::check({x, gain, bias},
                       [](Tape& t, const std::vector<Tape::Var>& v) {
                         Tape::Var y = t.layer_norm(v[0], v[1], v[2], 1e-5);
                         return t.mean(t.mul(y, y));
                       },
                       1e-5, 2e-6);
    }
  }

  SUBCASE("add_rowvec") {
    Tensor x = random_tensor({4, 3}, g);
    Tensor v0 = random_tensor({3}, g);
    gradcheck::check({x, v0}, [](Tape& t, const std::vector<Tape::Var>& v) {
      return t.sum(t.mul(t.add_rowvec(v[0], v[1]), t.add_rowvec(v[0], v[1])));
    });
  }

  SUBCASE("contract_path") {
    int B = 2, d = 3, dp = 2;
    Tensor F = random_tensor({B, d * dp}, g);
    Tensor xd = random_tensor({B, dp}, g);
    gradcheck::check({F, xd}, [=](Tape& t, const std::vector<Tape::Var>& v) {
      Tape::Var y = t.contract_path(v[0], v[1], d, dp);
      return t.mean(t.mul(y, y));
    });
  }

  SUBCASE("donet_head and shared_head") {
    int S = 2, c = 2, h = 4, q = 3;
    Tensor b = random_tensor({S, c * h}, g);
    Tensor tr = random_tensor({S * q, h}, g);
    gradcheck::check({b, tr}, [=](Tape& t, const std::vector<Tape::Var>& v) {
      Tape::Var y = t.donet_head(v[0], v[1], c, h, q);
      return t.mean(t.mul(y, y));
    });
    Tensor ts = random_tensor({q, h}, g);
    gradcheck::check({b, ts}, [=](Tape& t, const std::vector<Tape::Var>& v) {
      Tape::Var y = t.shared_head(v[0], v[1], c, h);
      return t.mean(t.mul(y, y));
    });
  }
}

TEST_CASE("shared_head values match donet_head with tiled trunk rows") {
  std::mt19937_64 g(55);
  int S = 3, c = 2, h = 4, q = 5;
  Tensor b = random_tensor({S, c * h}, g);
  Tensor tr = random_tensor({q, h}, g);
  Tensor tiled({S * q, h});
  for (int s = 0; s < S; ++s)
    for (int r = 0; r < q; ++r)
      for (int i = 0; i < h; ++i) tiled[(s * q + r) * h + i] = tr[r * h + i];
  Tape t;
  Tape::Var vb = t.constant(b), vtr = t.constant(tr), vtl = t.constant(tiled);
  Tensor y1 = t.value(t.shared_head(vb, vtr, c, h));
  Tensor y2 = t.value(t.donet_head(vb, vtl, c, h, q));
  REQUIRE(y1.numel() == y2.numel());
  for (long long i = 0; i < y1.numel(); ++i)
    CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));
}

TEST_CASE("backward is linear: grad(a*f + b*g) = a*grad(f) + b*grad(g)") {
  std::mt19937_64 g(77);
  Tensor x = random_tensor({3, 3}, g);
  auto gf = [](Tape& t, Tape::Var v) { return t.sum(t.tanh(t.mul(v, v))); };
  auto gg = [](Tape& t, Tape::Var v) { return t.mean(t.gelu(v)); };
  double a = 1.7, b = -0.4;

  Tape t1;
  Tape::Var v1 = t1.leaf(x);
  t1.backward(gf(t1, v1));
  Tensor g1 = t1.grad(v1);
  Tape t2;
  Tape::Var v2 = t2.leaf(x);
  t2.backward(gg(t2, v2));
  Tensor g2 = t2.grad(v2);
  Tape t3;
  Tape::Var v3 = t3.leaf(x);
  t3.backward(t3.add(t3.scale(gf(t3, v3), a), t3.scale(gg(t3, v3), b)));
  Tensor g3 = t3.grad(v3);
  for (long long i = 0; i < x.numel(); ++i)
    CHECK(g3[i] == doctest::Approx(a * g1[i] + b * g2[i]).epsilon(1e-12));
}

TEST_CASE("identical graphs give bitwise identical values and gradients") {
  auto build = [] {
    std::mt19937_64 g(4242);
    Tensor x = random_tensor({8, 8}, g);
    Tensor w = random_tensor({8, 8}, g);
    Tape t;
    Tape::Var vx = t.leaf(x), vw = t.leaf(w);
    Tape::Var y = t.gelu(t.matmul(vx, vw));
    y = t.layer_norm(y, t.leaf(Tensor::full({8}, 1.0)), t.leaf(Tensor({8})), 1e-5);
    Tape::Var loss = t.mean(t.mul(y, y));
    t.backward(loss);
    return std::make_pair(t.value(loss)[0], t.grad(vw));
  };
  auto [l1, g1] = build();
  auto [l2, g2] = build();
  CHECK(l1 == l2);
  REQUIRE(g1.numel() == g2.numel());
  for (long long i = 0; i < g1.numel(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("constants receive no gradient; detached subtrees are skipped") {
  Tape t;
  Tape::Var c = t.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  Tape::Var x = t.leaf(Tensor({2, 2}, {0.5, -1, 2, 0.25}));
  Tape::Var y = t.mul(t.add(x, c), c);
  t.backward(t.sum(y));
  Tensor gc = t.grad(c);
  for (long long i = 0; i < gc.numel(); ++i) CHECK(gc[i] == 0.0);
  Tensor gx = t.grad(x);
  CHECK(gx[0] == 1.0);
  CHECK(gx[1] == 2.0);
  CHECK(gx[2] == 3.0);
  CHECK(gx[3] == 4.0);
}

TEST_CASE("backward rejects non-scalar outputs without a seed") {
  Tape t;
  Tape::Var x = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  Tape::Var y = t.mul(x, x);
  CHECK_THROWS_AS(t.backward(y), value_error);
  // with a seed it is a VJP
  Tensor seed({2, 2}, {1, 0, 0, 1});
  CHECK_NOTHROW(t.backward(y, &seed));
  Tensor gx = t.grad(x);
  CHECK(gx[0] == 2.0);   // d(x^2)/dx * seed
  CHECK(gx[1] == 0.0);
  CHECK(gx[3] == 8.0);
}

TEST_CASE("grad before backward / invalid vars are errors") {
  Tape t;
  Tape::Var x = t.leaf(Tensor::scalar(1.0));
  CHECK_THROWS_AS(t.grad(x), value_error);
  CHECK_THROWS_AS(t.value(Tape::Var{}), value_error);
}
