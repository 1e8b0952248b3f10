#pragma once

#include <utility>
#include <vector>

#include "ncdeon/tensor.hpp"

namespace ncdeon {

// Reverse-mode tape over Tensor values.  Records every op in execution order
// (which is already a topological order), then backward() sweeps the nodes
// exactly once in reverse, accumulating vector-Jacobian products.
//
// Leaves come in two flavours: leaf() participates in differentiation,
// constant() is recorded but receives no gradient (and subtrees that depend
// only on constants are skipped in the sweep).
class Tape {
 public:
  struct Var {
    int id = -1;
    bool ok() const { return id >= 0; }
  };

  Var leaf(Tensor v);
  Var constant(Tensor v);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                  // elementwise
  Var scale(Var a, double s);
  Var scale_add(Var a, double s, double c);  // s*a + c
  // sum_i w_i * v_i over same-shape tensors; single node (RK4 combines)
  Var weighted_sum(const std::vector<std::pair<double, Var>>& terms);
  Var add_rowvec(Var a, Var v);
  Var matmul(Var a, Var b);
  Var linear(Var x, Var w, Var b);        // x (m,in) * w (in,out) + b (out)
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var gelu(Var a);
  Var layer_norm(Var x, Var gain, Var bias, double eps);
  Var contract_path(Var f, Var xdot, int d, int dp);
  Var donet_head(Var b, Var trunk, int c, int h, int q);
  // trunk rows shared by all branch rows: b (S,c*h) x trunk (q,h) -> (S*q,c)
  Var shared_head(Var b, Var trunk, int c, int h);
  Var sum(Var a);
  Var mean(Var a);

  // NOTE: the reference lives inside the node storage and is invalidated by
  // the next recorded op; copy it if you keep building the graph.
  const Tensor& value(Var v) const;

  // Reverse sweep from `out`.  Without a seed, `out` must be scalar
  // (throws value_error otherwise) and is seeded with 1.  With a seed, this
  // computes a VJP for arbitrary output shape (used by the adjoint).
  void backward(Var out, const Tensor* seed = nullptr);

  // Gradient of the seeded output w.r.t. a leaf; zeros if the leaf was never
  // reached (or is a constant).  Valid after backward().
  Tensor grad(Var v) const;

  size_t node_count() const { return nodes_.size(); }
  // rough bytes held by values + saved buffers (memory budgeting)
  size_t bytes() const;

 private:
  enum class Op {
    kLeaf, kConst, kAdd, kSub, kMul, kScale, kScaleAdd, kWeightedSum,
    kAddRowvec, kMatmul, kLinear, kTanh, kSigmoid, kGelu, kLayerNorm,
    kContractPath, kDonetHead, kSharedHead, kSum, kMean,
  };
  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    std::vector<int> extra;        // weighted_sum inputs
    std::vector<double> coeff;     // weighted_sum weights / scale factors / eps
    int i0 = 0, i1 = 0, i2 = 0;    // op-specific ints
    Tensor val;
    Tensor saved0, saved1;         // layer_norm xhat, inv_std
    bool needs_grad = false;
  };

  Var push(Node n);
  bool ng(Var v) const { return nodes_[v.id].needs_grad; }
  const Tensor& val(Var v) const { return nodes_[v.id].val; }
  void accum(int id, const Tensor& g);
  Tensor& gslot(int id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool swept_ = false;
};

}  // namespace ncdeon
