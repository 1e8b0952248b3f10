#pragma once

#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ncdeon {

// Every failure the library raises deliberately goes through one of these, so
// callers (and the CLI) can tell contract violations from numerical blow-ups.
struct value_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// printf-style formatting into std::string (no std::format on gcc 11)
inline std::string strf(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  char buf[1024];
  vsnprintf(buf, sizeof(buf), fmt, ap);
  va_end(ap);
  return std::string(buf);
}

// shortest decimal that round-trips a double (for text reports)
inline std::string dbl_str(double v) { return strf("%.17g", v); }

// --- fast scalar math ----------------------------------------------------
// tanh via expm1: max abs error vs std::tanh ~2e-16, noticeably cheaper.
inline double fast_tanh(double x) {
  double ax = std::fabs(x);
  if (ax > 19.0) return x > 0 ? 1.0 : -1.0;
  double em = std::expm1(-2.0 * ax);
  double t = -em / (em + 2.0);
  return x >= 0 ? t : -t;
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// gelu in tanh-approximation form.  The backward pass differentiates this
// exact expression, so gradient checks close to machine precision.
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

inline double gelu(double x) {
  double u = kGeluC * (x + kGeluA * x * x * x);
  return 0.5 * x * (1.0 + fast_tanh(u));
}

inline double gelu_grad(double x) {
  double u = kGeluC * (x + kGeluA * x * x * x);
  double t = fast_tanh(u);
  double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// --- seeding -------------------------------------------------------------
// splitmix64; used to derive independent per-sample / per-purpose streams
// from one master seed so results do not depend on evaluation order.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream, uint64_t index) {
  return splitmix64(master ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + index));
}

// --- deterministic parallel map ------------------------------------------
// Each index writes only its own outputs, so the result is identical for any
// thread count (including 1).  fn must not touch shared mutable state.
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  threads = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::exception_ptr err;
  std::vector<std::exception_ptr> errs(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errs[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) { err = e; break; }
  if (err) std::rethrow_exception(err);
}

}  // namespace ncdeon
