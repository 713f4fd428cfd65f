// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

namespace finetype::kernels {

// Dense row-major GEMM-style kernels used by every trainable layer.
//
// Two implementations with identical signatures:
//   serial::   plain loops, the reference kept for tests and benchmarks
//   parallel:: OpenMP over independent output rows
// Each output element is accumulated in the same order by both, so the
// results are bitwise identical at any thread count.

struct GemmDims {
  std::size_t batch;  // rows of x
  std::size_t in;     // cols of x == rows of W
  std::size_t out;    // cols of W
};

namespace serial {
// y[B×out] = x[B×in] · W[in×out] + b[out]   (b may be empty: no bias)
void gemm_bias(std::span<const double> x, std::span<const double> w, std::span<const double> b,
               std::span<double> y, GemmDims d);
// dW[in×out] += xᵀ · dy
void gemm_at_b_acc(std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                   GemmDims d);
// dx[B×in] (+)= dy[B×out] · Wᵀ ; overwrites when accumulate is false
void gemm_a_bt(std::span<const double> dy, std::span<const double> w, std::span<double> dx,
               GemmDims d, bool accumulate);
// db[out] += column sums of dy
void colsum_acc(std::span<const double> dy, std::span<double> db, GemmDims d);
}  // namespace serial

namespace parallel {
void gemm_bias(std::span<const double> x, std::span<const double> w, std::span<const double> b,
               std::span<double> y, GemmDims d);
void gemm_at_b_acc(std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                   GemmDims d);
void gemm_a_bt(std::span<const double> dy, std::span<const double> w, std::span<double> dx,
               GemmDims d, bool accumulate);
void colsum_acc(std::span<const double> dy, std::span<double> db, GemmDims d);
}  // namespace parallel

/// Number of OpenMP threads the parallel kernels use (1 without OpenMP).
int thread_count();
void set_thread_count(int n);

}  // namespace finetype::kernels
