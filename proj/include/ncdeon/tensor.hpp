#pragma once

#include <cstdlib>
#include <cstring>
#include <initializer_list>
#include <new>
#include <vector>

#include "ncdeon/util.hpp"

namespace ncdeon {

// 64-byte-aligned storage.  Alignment is part of the determinism story:
// vectorized kernels peel loops based on pointer alignment, and a consistent
// alignment gives a consistent summation order on every run.
template <class T>
struct aligned_alloc64 {
  using value_type = T;
  aligned_alloc64() = default;
  template <class U>
  aligned_alloc64(const aligned_alloc64<U>&) {}
  T* allocate(std::size_t n) {
    if (n == 0) return nullptr;
    void* p = std::aligned_alloc(64, ((n * sizeof(T) + 63) / 64) * 64);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { std::free(p); }
  template <class U>
  bool operator==(const aligned_alloc64<U>&) const { return true; }
};

using dvec = std::vector<double, aligned_alloc64<double>>;

// Dense row-major f64 tensor.  Rank is dynamic but nearly all of the code
// uses rank 1 and 2; ops check shapes and throw value_error on mismatch.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shp) : shape_(std::move(shp)) {
    data_.assign(numel_of(shape_), 0.0);
  }
  Tensor(std::vector<int> shp, std::initializer_list<double> vals)
      : shape_(std::move(shp)), data_(vals.begin(), vals.end()) {
    if ((long long)data_.size() != numel_of(shape_))
      throw value_error("Tensor: initializer size does not match shape");
  }
  static Tensor zeros(std::vector<int> shp) { return Tensor(std::move(shp)); }
  static Tensor full(std::vector<int> shp, double v) {
    Tensor t(std::move(shp));
    for (auto& x : t.data_) x = v;
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return (int)shape_.size(); }
  int dim(int i) const { return shape_[i]; }
  long long numel() const { return (long long)data_.size(); }
  bool empty() const { return data_.empty(); }

  // 2-D helpers (rank-1 tensors act as a single row)
  int rows() const { return rank() == 2 ? shape_[0] : 1; }
  int cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](long long i) { return data_[i]; }
  double operator[](long long i) const { return data_[i]; }
  double& at(int r, int c) { return data_[(long long)r * cols() + c]; }
  double at(int r, int c) const { return data_[(long long)r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  static long long numel_of(const std::vector<int>& s) {
    long long n = 1;
    for (int d : s) {
      if (d < 0) throw value_error("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  dvec data_;
};

std::string shape_str(const Tensor& t);

namespace ops {

// All binary ops require exact shape match unless stated otherwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);   // elementwise
Tensor scale(const Tensor& a, double s);
Tensor scale_add(const Tensor& a, double s, double c);  // s*a + c elementwise
// y[r, :] += v for every row r; v is rank-1 or (1,n)
Tensor add_rowvec(const Tensor& a, const Tensor& v);

// (m,k) x (k,n) -> (m,n); _tn takes a transposed: (k,m)^T x (k,n);
// _nt takes b transposed: (m,k) x (n,k)^T
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);

// row-wise layer norm over the last axis of a (rows,n) tensor.
// Returns y; optionally exports xhat and inv_std for the backward pass.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps, Tensor* xhat_out = nullptr,
                  Tensor* inv_std_out = nullptr);

double sum(const Tensor& a);
double mean(const Tensor& a);
Tensor sum_rows(const Tensor& a);  // (rows,n) -> (n)
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, int c0, int c1);  // [c0, c1)

double max_abs(const Tensor& a);
bool all_finite(const Tensor& a);
// throws numeric_error naming `what` if a contains NaN/Inf
void ensure_finite(const Tensor& a, const char* what);

// dz for a batch: F is (B, d*dp) laid out row-major as d x dp blocks,
// xdot is (B, dp); result (B, d) with out[b,i] = sum_j F[b, i*dp+j] * xdot[b,j]
Tensor contract_path(const Tensor& F, const Tensor& xdot, int d, int dp);

// DeepONet head: b is (S, c*h), trunk is (S*q, h) with q query rows per
// sample; out (S*q, c) with out[s*q+r, k] = sum_i b[s, k*h+i] * trunk[s*q+r, i]
Tensor donet_head(const Tensor& b, const Tensor& trunk, int c, int h, int q);

}  // namespace ops
}  // namespace ncdeon
