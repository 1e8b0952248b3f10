#include "ncdeon/gru.hpp"

#include <cstring>

namespace ncdeon {

GruParams make_gru(int input, int hidden, int layers, std::mt19937_64& g) {
  if (input < 1 || hidden < 1 || layers < 1)
    throw value_error("make_gru: bad dimensions");
  GruParams p;
  p.input = input;
  p.hidden = hidden;
  p.layers = layers;
  for (int l = 0; l < layers; ++l) {
    int in = l == 0 ? input : hidden;
    GruParams::Cell c;
    c.wr = glorot_affine(in, hidden, g);
    c.wz = glorot_affine(in, hidden, g);
    c.wn = glorot_affine(in, hidden, g);
    c.ur = orthogonal(hidden, g);
    c.uz = orthogonal(hidden, g);
    c.un = orthogonal(hidden, g);
    p.cells.push_back(std::move(c));
  }
  return p;
}

namespace {

// one cell step on (B,·) matrices, plain tensors
Tensor cell_step(const GruParams::Cell& c, const Tensor& x, const Tensor& h) {
  Tensor r = ops::sigmoid(ops::add(affine_apply(c.wr, x), ops::matmul(h, c.ur)));
  Tensor u = ops::sigmoid(ops::add(affine_apply(c.wz, x), ops::matmul(h, c.uz)));
  Tensor n = ops::tanh(
      ops::add(affine_apply(c.wn, x), ops::matmul(ops::mul(r, h), c.un)));
  // h' = (1-u) . n + u . h = n - u.n + u.h
  Tensor un_ = ops::mul(u, n);
  Tensor uh = ops::mul(u, h);
  return ops::add(ops::sub(n, un_), uh);
}

}  // namespace

Tensor gru_forward(const GruParams& p, const Tensor& values) {
  if (values.rank() != 2 || values.dim(1) != p.input)
    throw value_error(strf("gru_forward: values must be (T,%d), got ", p.input) +
                      shape_str(values));
  int T = values.dim(0);
  if (T < 1) throw value_error("gru_forward: empty sequence");
  std::vector<Tensor> h(p.layers, Tensor({1, p.hidden}));
  for (int t = 0; t < T; ++t) {
    Tensor x({1, p.input});
    std::memcpy(x.data(), values.data() + (long long)t * p.input,
                p.input * sizeof(double));
    for (int l = 0; l < p.layers; ++l) {
      h[l] = cell_step(p.cells[l], x, h[l]);
      x = h[l];
    }
  }
  Tensor out({p.hidden});
  std::memcpy(out.data(), h.back().data(), p.hidden * sizeof(double));
  return out;
}

GruTapeLeaves gru_leaves(Tape& tape, const GruParams& p) {
  GruTapeLeaves lv;
  for (auto& c : p.cells) {
    GruTapeLeaves::Cell lc;
    lc.wr = {tape.leaf(c.wr.W), tape.leaf(c.wr.b)};
    lc.wz = {tape.leaf(c.wz.W), tape.leaf(c.wz.b)};
    lc.wn = {tape.leaf(c.wn.W), tape.leaf(c.wn.b)};
    lc.ur = tape.leaf(c.ur);
    lc.uz = tape.leaf(c.uz);
    lc.un = tape.leaf(c.un);
    lv.cells.push_back(lc);
  }
  return lv;
}

Tape::Var gru_tape_forward(Tape& tape, const GruParams& p,
                           const GruTapeLeaves& lv,
                           const std::vector<Tape::Var>& xs) {
  if (xs.empty()) throw value_error("gru_tape_forward: empty sequence");
  int B = tape.value(xs[0]).rows();
  std::vector<Tape::Var> h;
  for (int l = 0; l < p.layers; ++l)
    h.push_back(tape.constant(Tensor({B, p.hidden})));
  for (auto x : xs) {
    Tape::Var inp = x;
    for (int l = 0; l < p.layers; ++l) {
      const auto& c = lv.cells[l];
      Tape::Var r = tape.sigmoid(tape.add(tape.linear(inp, c.wr[0], c.wr[1]),
                                          tape.matmul(h[l], c.ur)));
      Tape::Var u = tape.sigmoid(tape.add(tape.linear(inp, c.wz[0], c.wz[1]),
                                          tape.matmul(h[l], c.uz)));
      Tape::Var n = tape.tanh(tape.add(tape.linear(inp, c.wn[0], c.wn[1]),
                                       tape.matmul(tape.mul(r, h[l]), c.un)));
      // (1-u).n + u.h
      Tape::Var one_m_u = tape.scale_add(u, -1.0, 1.0);
      h[l] = tape.add(tape.mul(one_m_u, n), tape.mul(u, h[l]));
      inp = h[l];
    }
  }
  return h.back();
}

}  // namespace ncdeon
