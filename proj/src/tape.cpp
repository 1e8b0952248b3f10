#include "ncdeon/tape.hpp"

#include <cmath>
#include <cstring>

namespace ncdeon {

using Var = Tape::Var;

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{(int)nodes_.size() - 1};
}

Var Tape::leaf(Tensor v) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(v);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor v) {
  Node n;
  n.op = Op::kConst;
  n.val = std::move(v);
  n.needs_grad = false;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.val = ops::add(val(a), val(b));
  n.needs_grad = ng(a) || ng(b);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.val = ops::sub(val(a), val(b));
  n.needs_grad = ng(a) || ng(b);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  Node n;
  n.op = Op::kMul;
  n.a = a.id;
  n.b = b.id;
  n.val = ops::mul(val(a), val(b));
  n.needs_grad = ng(a) || ng(b);
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.coeff = {s};
  n.val = ops::scale(val(a), s);
  n.needs_grad = ng(a);
  return push(std::move(n));
}

Var Tape::scale_add(Var a, double s, double c) {
  Node n;
  n.op = Op::kScaleAdd;
  n.a = a.id;
  n.coeff = {s, c};
  n.val = ops::scale_add(val(a), s, c);
  n.needs_grad = ng(a);
  return push(std::move(n));
}

Var Tape::weighted_sum(const std::vector<std::pair<double, Var>>& terms) {
  if (terms.empty()) throw value_error("weighted_sum: no terms");
  Node n;
  n.op = Op::kWeightedSum;
  n.val = Tensor(val(terms[0].second).shape());
  for (auto& [w, v] : terms) {
    const Tensor& t = val(v);
    if (!t.same_shape(n.val))
      throw value_error("weighted_sum: shape mismatch " + shape_str(t) +
                        " vs " + shape_str(n.val));
    for (long long i = 0; i < n.val.numel(); ++i) n.val[i] += w * t[i];
    n.extra.push_back(v.id);
    n.coeff.push_back(w);
    n.needs_grad = n.needs_grad || ng(v);
  }
  return push(std::move(n));
}

Var Tape::add_rowvec(Var a, Var v) {
  Node n;
  n.op = Op::kAddRowvec;
  n.a = a.id;
  n.b = v.id;
  n.val = ops::add_rowvec(val(a), val(v));
  n.needs_grad = ng(a) || ng(v);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  Node n;
  n.op = Op::kMatmul;
  n.a = a.id;
  n.b = b.id;
  n.val = ops::matmul(val(a), val(b));
  n.needs_grad = ng(a) || ng(b);
  return push(std::move(n));
}

Var Tape::linear(Var x, Var w, Var b) {
  Node n;
  n.op = Op::kLinear;
  n.a = x.id;
  n.b = w.id;
  n.c = b.id;
  n.val = ops::add_rowvec(ops::matmul(val(x), val(w)), val(b));
  n.needs_grad = ng(x) || ng(w) || ng(b);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  n.val = ops::tanh(val(a));
  n.needs_grad = ng(a);
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.id;
  n.val = ops::sigmoid(val(a));
  n.needs_grad = ng(a);
  return push(std::move(n));
}

Var Tape::gelu(Var a) {
  Node n;
  n.op = Op::kGelu;
  n.a = a.id;
  n.val = ops::gelu(val(a));
  n.needs_grad = ng(a);
  return push(std::move(n));
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  Node n;
  n.op = Op::kLayerNorm;
  n.a = x.id;
  n.b = gain.id;
  n.c = bias.id;
  n.coeff = {eps};
  n.val = ops::layer_norm(val(x), val(gain), val(bias), eps, &n.saved0, &n.saved1);
  n.needs_grad = ng(x) || ng(gain) || ng(bias);
  return push(std::move(n));
}

Var Tape::contract_path(Var f, Var xdot, int d, int dp) {
  Node n;
  n.op = Op::kContractPath;
  n.a = f.id;
  n.b = xdot.id;
  n.i0 = d;
  n.i1 = dp;
  n.val = ops::contract_path(val(f), val(xdot), d, dp);
  n.needs_grad = ng(f) || ng(xdot);
  return push(std::move(n));
}

Var Tape::donet_head(Var b, Var trunk, int c, int h, int q) {
  Node n;
  n.op = Op::kDonetHead;
  n.a = b.id;
  n.b = trunk.id;
  n.i0 = c;
  n.i1 = h;
  n.i2 = q;
  n.val = ops::donet_head(val(b), val(trunk), c, h, q);
  n.needs_grad = ng(b) || ng(trunk);
  return push(std::move(n));
}

Var Tape::shared_head(Var b, Var trunk, int c, int h) {
  const Tensor& bv = val(b);
  const Tensor& tv = val(trunk);
  if (bv.rank() != 2 || bv.cols() != c * h)
    throw value_error("shared_head: branch must be (S," + std::to_string(c * h) +
                      "), got " + shape_str(bv));
  if (tv.rank() != 2 || tv.cols() != h)
    throw value_error("shared_head: trunk must be (q," + std::to_string(h) +
                      "), got " + shape_str(tv));
  int S = bv.rows(), q = tv.rows();
  Node n;
  n.op = Op::kSharedHead;
  n.a = b.id;
  n.b = trunk.id;
  n.i0 = c;
  n.i1 = h;
  n.i2 = q;
  n.val = Tensor({S * q, c});
  // per channel: out[:,k] viewed (S,q) = b[:, k*h:(k+1)*h] * trunk^T
  for (int k = 0; k < c; ++k) {
    Tensor bk = c == 1 ? bv : ops::slice_cols(bv, k * h, (k + 1) * h);
    Tensor pk = ops::matmul_nt(bk, tv);  // (S,q)
    for (int s = 0; s < S; ++s)
      for (int r = 0; r < q; ++r)
        n.val[(long long)(s * q + r) * c + k] = pk.at(s, r);
  }
  n.needs_grad = ng(b) || ng(trunk);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::kSum;
  n.a = a.id;
  n.val = Tensor::scalar(ops::sum(val(a)));
  n.needs_grad = ng(a);
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  Node n;
  n.op = Op::kMean;
  n.a = a.id;
  n.val = Tensor::scalar(ops::mean(val(a)));
  n.needs_grad = ng(a);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  if (!v.ok() || v.id >= (int)nodes_.size())
    throw value_error("Tape::value: invalid var");
  return nodes_[v.id].val;
}

Tensor& Tape::gslot(int id) {
  if (grads_[id].empty() && nodes_[id].val.numel() > 0)
    grads_[id] = Tensor(nodes_[id].val.shape());
  return grads_[id];
}

void Tape::accum(int id, const Tensor& g) {
  Tensor& slot = gslot(id);
  double* ps = slot.data();
  const double* pg = g.data();
  for (long long i = 0; i < slot.numel(); ++i) ps[i] += pg[i];
}

Tensor Tape::grad(Var v) const {
  if (!swept_) throw value_error("Tape::grad before backward");
  if (!v.ok() || v.id >= (int)nodes_.size())
    throw value_error("Tape::grad: invalid var");
  if (grads_[v.id].empty()) return Tensor(nodes_[v.id].val.shape());
  return grads_[v.id];
}

size_t Tape::bytes() const {
  size_t b = 0;
  for (auto& n : nodes_)
    b += (n.val.numel() + n.saved0.numel() + n.saved1.numel()) * sizeof(double);
  return b;
}

void Tape::backward(Var out, const Tensor* seed) {
  if (!out.ok() || out.id >= (int)nodes_.size())
    throw value_error("backward: invalid output var");
  grads_.assign(nodes_.size(), Tensor());
  if (seed) {
    if (!seed->same_shape(nodes_[out.id].val))
      throw value_error("backward: seed shape " + shape_str(*seed) +
                        " vs output " + shape_str(nodes_[out.id].val));
    grads_[out.id] = *seed;
  } else {
    if (nodes_[out.id].val.numel() != 1)
      throw value_error("backward: output must be scalar, got " +
                        shape_str(nodes_[out.id].val));
    grads_[out.id] = Tensor::scalar(1.0);
  }
  swept_ = true;

  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || grads_[id].empty()) continue;
    const Tensor& g = grads_[id];
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kAdd:
        if (ng(Var{n.a})) accum(n.a, g);
        if (ng(Var{n.b})) accum(n.b, g);
        break;
      case Op::kSub:
        if (ng(Var{n.a})) accum(n.a, g);
        if (ng(Var{n.b})) accum(n.b, ops::scale(g, -1.0));
        break;
      case Op::kMul:
        if (ng(Var{n.a})) accum(n.a, ops::mul(g, nodes_[n.b].val));
        if (ng(Var{n.b})) accum(n.b, ops::mul(g, nodes_[n.a].val));
        break;
      case Op::kScale:
        accum(n.a, ops::scale(g, n.coeff[0]));
        break;
      case Op::kScaleAdd:
        accum(n.a, ops::scale(g, n.coeff[0]));
        break;
      case Op::kWeightedSum:
        for (size_t i = 0; i < n.extra.size(); ++i)
          if (ng(Var{n.extra[i]}))
            accum(n.extra[i], ops::scale(g, n.coeff[i]));
        break;
      case Op::kAddRowvec:
        if (ng(Var{n.a})) accum(n.a, g);
        if (ng(Var{n.b})) accum(n.b, ops::sum_rows(g));
        break;
      case Op::kMatmul:
        if (ng(Var{n.a})) accum(n.a, ops::matmul_nt(g, nodes_[n.b].val));
        if (ng(Var{n.b})) accum(n.b, ops::matmul_tn(nodes_[n.a].val, g));
        break;
      case Op::kLinear:
        if (ng(Var{n.a})) accum(n.a, ops::matmul_nt(g, nodes_[n.b].val));
        if (ng(Var{n.b})) accum(n.b, ops::matmul_tn(nodes_[n.a].val, g));
        if (ng(Var{n.c})) accum(n.c, ops::sum_rows(g));
        break;
      case Op::kTanh: {
        Tensor gx = g;
        const Tensor& y = n.val;
        for (long long i = 0; i < gx.numel(); ++i) gx[i] *= 1.0 - y[i] * y[i];
        accum(n.a, gx);
        break;
      }
      case Op::kSigmoid: {
        Tensor gx = g;
        const Tensor& y = n.val;
        for (long long i = 0; i < gx.numel(); ++i) gx[i] *= y[i] * (1.0 - y[i]);
        accum(n.a, gx);
        break;
      }
      case Op::kGelu: {
        Tensor gx = g;
        const Tensor& x = nodes_[n.a].val;
        for (long long i = 0; i < gx.numel(); ++i) gx[i] *= gelu_grad(x[i]);
        accum(n.a, gx);
        break;
      }
      case Op::kLayerNorm: {
        const Tensor& xhat = n.saved0;
        const Tensor& inv = n.saved1;
        const Tensor& gain = nodes_[n.b].val;
        int m = xhat.rows(), nf = xhat.cols();
        if (ng(Var{n.a})) {
          Tensor gx({m, nf});
          for (int r = 0; r < m; ++r) {
            const double* pg = g.data() + (long long)r * nf;
            const double* ph = xhat.data() + (long long)r * nf;
            double* px = gx.data() + (long long)r * nf;
            double m1 = 0, m2 = 0;
            for (int j = 0; j < nf; ++j) {
              double dh = pg[j] * gain[j];
              m1 += dh;
              m2 += dh * ph[j];
            }
            m1 /= nf;
            m2 /= nf;
            for (int j = 0; j < nf; ++j) {
              double dh = pg[j] * gain[j];
              px[j] = inv[r] * (dh - m1 - ph[j] * m2);
            }
          }
          accum(n.a, gx);
        }
        if (ng(Var{n.b})) accum(n.b, ops::sum_rows(ops::mul(g, xhat)));
        if (ng(Var{n.c})) accum(n.c, ops::sum_rows(g));
        break;
      }
      case Op::kContractPath: {
        int d = n.i0, dp = n.i1;
        const Tensor& F = nodes_[n.a].val;
        const Tensor& xd = nodes_[n.b].val;
        int B = F.rows();
        if (ng(Var{n.a})) {
          Tensor gF({B, d * dp});
          for (int bb = 0; bb < B; ++bb)
            for (int i = 0; i < d; ++i)
              for (int j = 0; j < dp; ++j)
                gF[(long long)bb * d * dp + i * dp + j] =
                    g[(long long)bb * d + i] * xd[(long long)bb * dp + j];
          accum(n.a, gF);
        }
        if (ng(Var{n.b})) {
          Tensor gX({B, dp});
          for (int bb = 0; bb < B; ++bb)
            for (int j = 0; j < dp; ++j) {
              double s = 0;
              for (int i = 0; i < d; ++i)
                s += g[(long long)bb * d + i] * F[(long long)bb * d * dp + i * dp + j];
              gX[(long long)bb * dp + j] = s;
            }
          accum(n.b, gX);
        }
        break;
      }
      case Op::kDonetHead: {
        int c = n.i0, h = n.i1, q = n.i2;
        const Tensor& bv = nodes_[n.a].val;
        const Tensor& tv = nodes_[n.b].val;
        int S = bv.rows();
        if (ng(Var{n.a})) {
          Tensor gb({S, c * h});
          for (int s = 0; s < S; ++s)
            for (int r = 0; r < q; ++r) {
              const double* pt = tv.data() + (long long)(s * q + r) * h;
              const double* pg = g.data() + (long long)(s * q + r) * c;
              double* pb = gb.data() + (long long)s * c * h;
              for (int k = 0; k < c; ++k)
                for (int i = 0; i < h; ++i) pb[k * h + i] += pg[k] * pt[i];
            }
          accum(n.a, gb);
        }
        if (ng(Var{n.b})) {
          Tensor gt({S * q, h});
          for (int s = 0; s < S; ++s)
            for (int r = 0; r < q; ++r) {
              const double* pb = bv.data() + (long long)s * c * h;
              const double* pg = g.data() + (long long)(s * q + r) * c;
              double* pt = gt.data() + (long long)(s * q + r) * h;
              for (int k = 0; k < c; ++k)
                for (int i = 0; i < h; ++i) pt[i] += pg[k] * pb[k * h + i];
            }
          accum(n.b, gt);
        }
        break;
      }
      case Op::kSharedHead: {
        int c = n.i0, h = n.i1, q = n.i2;
        const Tensor& bv = nodes_[n.a].val;
        const Tensor& tv = nodes_[n.b].val;
        int S = bv.rows();
        for (int k = 0; k < c; ++k) {
          Tensor gk({S, q});  // channel-k slice of g viewed (S,q)
          for (int s = 0; s < S; ++s)
            for (int r = 0; r < q; ++r)
              gk.at(s, r) = g[(long long)(s * q + r) * c + k];
          if (ng(Var{n.a})) {
            Tensor gbk = ops::matmul(gk, tv);  // (S,h)
            Tensor gb({S, c * h});
            for (int s = 0; s < S; ++s)
              std::memcpy(gb.data() + (long long)s * c * h + k * h,
                          gbk.data() + (long long)s * h, h * sizeof(double));
            accum(n.a, gb);
          }
          if (ng(Var{n.b})) {
            Tensor bk = c == 1 ? bv : ops::slice_cols(bv, k * h, (k + 1) * h);
            accum(n.b, ops::matmul_tn(gk, bk));  // (q,h)
          }
        }
        break;
      }
      case Op::kSum: {
        Tensor gx = Tensor::full(nodes_[n.a].val.shape(), g[0]);
        accum(n.a, gx);
        break;
      }
      case Op::kMean: {
        Tensor gx = Tensor::full(nodes_[n.a].val.shape(),
                                 g[0] / (double)nodes_[n.a].val.numel());
        accum(n.a, gx);
        break;
      }
    }
  }
}

}  // namespace ncdeon
