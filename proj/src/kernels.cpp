// SPDX-License-Identifier: Apache-2.0
#include "finetype/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace finetype::kernels {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 1 << 14;

inline void gemm_bias_row(const double* x, const double* w, const double* b, double* y,
                          const GemmDims& d) {
  for (std::size_t j = 0; j < d.out; ++j) y[j] = b ? b[j] : 0.0;
  for (std::size_t k = 0; k < d.in; ++k) {
    const double xk = x[k];
    const double* wk = w + k * d.out;
    for (std::size_t j = 0; j < d.out; ++j) y[j] += xk * wk[j];
  }
}

inline void at_b_row(const double* x, const double* dy, double* dw, std::size_t k,
                     const GemmDims& d) {
  double* dwk = dw + k * d.out;
  for (std::size_t i = 0; i < d.batch; ++i) {
    const double xik = x[i * d.in + k];
    const double* dyi = dy + i * d.out;
    for (std::size_t j = 0; j < d.out; ++j) dwk[j] += xik * dyi[j];
  }
}

inline void a_bt_row(const double* dy, const double* w, double* dx, const GemmDims& d,
                     bool accumulate) {
  for (std::size_t k = 0; k < d.in; ++k) {
    const double* wk = w + k * d.out;
    double acc = 0.0;
    for (std::size_t j = 0; j < d.out; ++j) acc += dy[j] * wk[j];
    dx[k] = accumulate ? dx[k] + acc : acc;
  }
}
}  // namespace

namespace serial {

void gemm_bias(std::span<const double> x, std::span<const double> w, std::span<const double> b,
               std::span<double> y, GemmDims d) {
  const double* bp = b.empty() ? nullptr : b.data();
  for (std::size_t i = 0; i < d.batch; ++i) {
    gemm_bias_row(x.data() + i * d.in, w.data(), bp, y.data() + i * d.out, d);
  }
}

void gemm_at_b_acc(std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                   GemmDims d) {
  for (std::size_t k = 0; k < d.in; ++k) at_b_row(x.data(), dy.data(), dw.data(), k, d);
}

void gemm_a_bt(std::span<const double> dy, std::span<const double> w, std::span<double> dx,
               GemmDims d, bool accumulate) {
  for (std::size_t i = 0; i < d.batch; ++i) {
    a_bt_row(dy.data() + i * d.out, w.data(), dx.data() + i * d.in, d, accumulate);
  }
}

void colsum_acc(std::span<const double> dy, std::span<double> db, GemmDims d) {
  for (std::size_t i = 0; i < d.batch; ++i) {
    for (std::size_t j = 0; j < d.out; ++j) db[j] += dy[i * d.out + j];
  }
}

}  // namespace serial

namespace parallel {

void gemm_bias(std::span<const double> x, std::span<const double> w, std::span<const double> b,
               std::span<double> y, GemmDims d) {
  const double* bp = b.empty() ? nullptr : b.data();
  const auto n = static_cast<std::ptrdiff_t>(d.batch);
  const bool big = d.batch * d.in * d.out >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    gemm_bias_row(x.data() + i * d.in, w.data(), bp, y.data() + i * d.out, d);
  }
}

void gemm_at_b_acc(std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                   GemmDims d) {
  const auto n = static_cast<std::ptrdiff_t>(d.in);
  const bool big = d.batch * d.in * d.out >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    at_b_row(x.data(), dy.data(), dw.data(), static_cast<std::size_t>(k), d);
  }
}

void gemm_a_bt(std::span<const double> dy, std::span<const double> w, std::span<double> dx,
               GemmDims d, bool accumulate) {
  const auto n = static_cast<std::ptrdiff_t>(d.batch);
  const bool big = d.batch * d.in * d.out >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    a_bt_row(dy.data() + i * d.out, w.data(), dx.data() + i * d.in, d, accumulate);
  }
}

void colsum_acc(std::span<const double> dy, std::span<double> db, GemmDims d) {
  const auto n = static_cast<std::ptrdiff_t>(d.out);
  const bool big = d.batch * d.out >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    double acc = db[j];
    for (std::size_t i = 0; i < d.batch; ++i) acc += dy[i * d.out + j];
    db[j] = acc;
  }
}

}  // namespace parallel

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_thread_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace finetype::kernels
