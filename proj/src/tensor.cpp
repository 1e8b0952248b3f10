#include "ncdeon/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace ncdeon {

std::string shape_str(const Tensor& t) {
  std::string s = "(";
  for (int i = 0; i < t.rank(); ++i)
    s += (i ? "," : "") + std::to_string(t.shape()[i]);
  return s + ")";
}

namespace ops {
namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat, Eigen::Aligned64>;
using MapCM = Eigen::Map<const EMat, Eigen::Aligned64>;

MapCM cmap(const Tensor& t) { return MapCM(t.data(), t.rows(), t.cols()); }
MapM mmap(Tensor& t) { return MapM(t.data(), t.rows(), t.cols()); }

void need_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw value_error(std::string(op) + ": shape mismatch " + shape_str(a) +
                      " vs " + shape_str(b));
}

void need_2d(const Tensor& a, const char* op) {
  if (a.rank() != 2)
    throw value_error(std::string(op) + ": expected rank-2, got " + shape_str(a));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  need_same(a, b, "add");
  Tensor o = a;
  const double* pb = b.data();
  double* po = o.data();
  for (long long i = 0; i < o.numel(); ++i) po[i] += pb[i];
  return o;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  need_same(a, b, "sub");
  Tensor o = a;
  const double* pb = b.data();
  double* po = o.data();
  for (long long i = 0; i < o.numel(); ++i) po[i] -= pb[i];
  return o;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  need_same(a, b, "mul");
  Tensor o = a;
  const double* pb = b.data();
  double* po = o.data();
  for (long long i = 0; i < o.numel(); ++i) po[i] *= pb[i];
  return o;
}

Tensor scale(const Tensor& a, double s) {
  Tensor o = a;
  for (long long i = 0; i < o.numel(); ++i) o[i] *= s;
  return o;
}

Tensor scale_add(const Tensor& a, double s, double c) {
  Tensor o = a;
  for (long long i = 0; i < o.numel(); ++i) o[i] = s * o[i] + c;
  return o;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (v.numel() != a.cols())
    throw value_error("add_rowvec: vector length " + std::to_string(v.numel()) +
                      " vs cols " + std::to_string(a.cols()));
  Tensor o = a;
  int n = o.cols(), m = o.rows();
  const double* pv = v.data();
  for (int r = 0; r < m; ++r) {
    double* row = o.data() + (long long)r * n;
    for (int j = 0; j < n; ++j) row[j] += pv[j];
  }
  return o;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  need_2d(a, "matmul");
  need_2d(b, "matmul");
  if (a.cols() != b.rows())
    throw value_error("matmul: inner dims " + shape_str(a) + " x " + shape_str(b));
  Tensor o({a.rows(), b.cols()});
  mmap(o).noalias() = cmap(a) * cmap(b);
  return o;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  need_2d(a, "matmul_tn");
  need_2d(b, "matmul_tn");
  if (a.rows() != b.rows())
    throw value_error("matmul_tn: inner dims " + shape_str(a) + "^T x " + shape_str(b));
  Tensor o({a.cols(), b.cols()});
  mmap(o).noalias() = cmap(a).transpose() * cmap(b);
  return o;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  need_2d(a, "matmul_nt");
  need_2d(b, "matmul_nt");
  if (a.cols() != b.cols())
    throw value_error("matmul_nt: inner dims " + shape_str(a) + " x " + shape_str(b) + "^T");
  Tensor o({a.rows(), b.rows()});
  mmap(o).noalias() = cmap(a) * cmap(b).transpose();
  return o;
}

Tensor tanh(const Tensor& a) {
  Tensor o = a;
  for (long long i = 0; i < o.numel(); ++i) o[i] = fast_tanh(o[i]);
  return o;
}

Tensor sigmoid(const Tensor& a) {
  Tensor o = a;
  for (long long i = 0; i < o.numel(); ++i) o[i] = ncdeon::sigmoid(o[i]);
  return o;
}

Tensor gelu(const Tensor& a) {
  Tensor o = a;
  for (long long i = 0; i < o.numel(); ++i) o[i] = ncdeon::gelu(o[i]);
  return o;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps, Tensor* xhat_out, Tensor* inv_std_out) {
  need_2d(x, "layer_norm");
  int m = x.rows(), n = x.cols();
  if (gain.numel() != n || bias.numel() != n)
    throw value_error("layer_norm: gain/bias length vs features " + std::to_string(n));
  Tensor y({m, n});
  Tensor xh({m, n});
  Tensor inv({m});
  const double* pg = gain.data();
  const double* pb = bias.data();
  for (int r = 0; r < m; ++r) {
    const double* px = x.data() + (long long)r * n;
    double mu = 0;
    for (int j = 0; j < n; ++j) mu += px[j];
    mu /= n;
    double var = 0;
    for (int j = 0; j < n; ++j) {
      double d = px[j] - mu;
      var += d * d;
    }
    var /= n;
    double is = 1.0 / std::sqrt(var + eps);
    inv[r] = is;
    double* pxh = xh.data() + (long long)r * n;
    double* py = y.data() + (long long)r * n;
    for (int j = 0; j < n; ++j) {
      pxh[j] = (px[j] - mu) * is;
      py[j] = pxh[j] * pg[j] + pb[j];
    }
  }
  if (xhat_out) *xhat_out = std::move(xh);
  if (inv_std_out) *inv_std_out = std::move(inv);
  return y;
}

double sum(const Tensor& a) {
  // fixed left-to-right order; numel is moderate everywhere this is used
  double s = 0;
  for (long long i = 0; i < a.numel(); ++i) s += a[i];
  return s;
}

double mean(const Tensor& a) {
  if (a.numel() == 0) throw value_error("mean: empty tensor");
  return sum(a) / (double)a.numel();
}

Tensor sum_rows(const Tensor& a) {
  need_2d(a, "sum_rows");
  Tensor o({a.cols()});
  for (int r = 0; r < a.rows(); ++r) {
    const double* row = a.data() + (long long)r * a.cols();
    for (int j = 0; j < a.cols(); ++j) o[j] += row[j];
  }
  return o;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  need_2d(a, "concat_cols");
  need_2d(b, "concat_cols");
  if (a.rows() != b.rows())
    throw value_error("concat_cols: rows " + shape_str(a) + " vs " + shape_str(b));
  Tensor o({a.rows(), a.cols() + b.cols()});
  for (int r = 0; r < a.rows(); ++r) {
    std::memcpy(o.data() + (long long)r * o.cols(),
                a.data() + (long long)r * a.cols(), a.cols() * sizeof(double));
    std::memcpy(o.data() + (long long)r * o.cols() + a.cols(),
                b.data() + (long long)r * b.cols(), b.cols() * sizeof(double));
  }
  return o;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  need_2d(a, "slice_cols");
  if (c0 < 0 || c1 > a.cols() || c0 >= c1)
    throw value_error(strf("slice_cols: [%d,%d) of %d cols", c0, c1, a.cols()));
  Tensor o({a.rows(), c1 - c0});
  for (int r = 0; r < a.rows(); ++r)
    std::memcpy(o.data() + (long long)r * o.cols(),
                a.data() + (long long)r * a.cols() + c0,
                (c1 - c0) * sizeof(double));
  return o;
}

double max_abs(const Tensor& a) {
  double m = 0;
  for (long long i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i]));
  return m;
}

bool all_finite(const Tensor& a) {
  for (long long i = 0; i < a.numel(); ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

void ensure_finite(const Tensor& a, const char* what) {
  if (!all_finite(a))
    throw numeric_error(std::string("non-finite values in ") + what);
}

Tensor contract_path(const Tensor& F, const Tensor& xdot, int d, int dp) {
  if (F.rank() != 2 || F.cols() != d * dp)
    throw value_error("contract_path: F must be (B," + std::to_string(d * dp) +
                      "), got " + shape_str(F));
  if (xdot.rank() != 2 || xdot.rows() != F.rows() || xdot.cols() != dp)
    throw value_error("contract_path: xdot must be (B," + std::to_string(dp) +
                      "), got " + shape_str(xdot));
  int B = F.rows();
  Tensor o({B, d});
  for (int b = 0; b < B; ++b) {
    const double* pf = F.data() + (long long)b * d * dp;
    const double* px = xdot.data() + (long long)b * dp;
    double* po = o.data() + (long long)b * d;
    for (int i = 0; i < d; ++i) {
      double s = 0;
      for (int j = 0; j < dp; ++j) s += pf[i * dp + j] * px[j];
      po[i] = s;
    }
  }
  return o;
}

Tensor donet_head(const Tensor& b, const Tensor& trunk, int c, int h, int q) {
  if (b.rank() != 2 || b.cols() != c * h)
    throw value_error("donet_head: branch must be (S," + std::to_string(c * h) +
                      "), got " + shape_str(b));
  int S = b.rows();
  if (trunk.rank() != 2 || trunk.rows() != S * q || trunk.cols() != h)
    throw value_error(strf("donet_head: trunk must be (%d,%d), got ", S * q, h) +
                      shape_str(trunk));
  Tensor o({S * q, c});
  for (int s = 0; s < S; ++s) {
    const double* pb = b.data() + (long long)s * c * h;
    for (int r = 0; r < q; ++r) {
      const double* pt = trunk.data() + (long long)(s * q + r) * h;
      double* po = o.data() + (long long)(s * q + r) * c;
      for (int k = 0; k < c; ++k) {
        double acc = 0;
        for (int i = 0; i < h; ++i) acc += pb[k * h + i] * pt[i];
        po[k] = acc;
      }
    }
  }
  return o;
}

}  // namespace ops
}  // namespace ncdeon
