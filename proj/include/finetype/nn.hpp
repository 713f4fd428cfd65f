// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "finetype/param_store.hpp"
#include "finetype/rng.hpp"
#include "finetype/tensor.hpp"

namespace finetype::nn {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

/// y = xW + b for x[B×in], W[in×out], b[out].
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);
/// Accumulates dW += xᵀdy and db += colsum(dy); returns dx = dy·Wᵀ.
Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db);

/// x[B×in] · W[in×out] without bias.
Tensor matmul(const Tensor& x, const Tensor& w);

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { relu, sigmoid, tanh, softmax_lastdim };

double sigmoid(double x);

/// Elementwise activation, or a max-subtracted softmax over the last
/// dimension. NaN input raises NumericError.
Tensor activate(const Tensor& x, Activation kind);
/// Gradient w.r.t. the input, given the forward input x, output y and dL/dy.
Tensor activate_backward(const Tensor& x, const Tensor& y, const Tensor& dy, Activation kind);

// ---------------------------------------------------------------------------
// Dropout (inverted)
// ---------------------------------------------------------------------------

struct DropoutResult {
  Tensor output;
  Tensor mask;  // 0 for dropped elements, 1/(1-p) for survivors
};

DropoutResult dropout_forward(const Tensor& x, double p, Mode mode, Rng& rng);
Tensor dropout_backward(const Tensor& dy, const Tensor& mask);

// ---------------------------------------------------------------------------
// Binary cross-entropy on sigmoid scores
// ---------------------------------------------------------------------------

inline constexpr double kScoreClamp = 1e-12;

/// Mean elementwise BCE over every unmasked row of scores[...×N]. row_mask,
/// when given, has one flag per row (nonzero = keep). Targets must be 0 or 1.
double bce_loss(const Tensor& scores, const Tensor& targets,
                std::span<const unsigned char> row_mask = {});
/// dLoss/dscores for bce_loss with the same arguments. Masked rows get zero.
Tensor bce_backward(const Tensor& scores, const Tensor& targets,
                    std::span<const unsigned char> row_mask = {});

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

/// Indices of one GRU cell's parameters inside a ParamStore.
///   z = σ(x·W_z + h·U_z + b_z)
///   r = σ(x·W_r + h·U_r + b_r)
///   h̃ = tanh(x·W_h + (r⊙h)·U_h + b_h)
///   h' = (1 − z)⊙h + z⊙h̃
/// W_* are input×hidden, U_* hidden×hidden.
struct GruCellParams {
  std::size_t w_z, w_r, w_h;
  std::size_t u_z, u_r, u_h;
  std::size_t b_z, b_r, b_h;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  /// Registers "<prefix>.W_z", "<prefix>.U_z", "<prefix>.b_z", ... in store.
  static GruCellParams create(ParamStore& store, const std::string& prefix, std::size_t input_dim,
                              std::size_t hidden_dim, Rng& rng);
  /// Looks up an existing set of parameters registered by create().
  static GruCellParams bind(const ParamStore& store, const std::string& prefix);
};

struct GruStepCache {
  Tensor x, h_prev, z, r, h_tilde, rh;
};

Tensor gru_cell_forward(const Tensor& x, const Tensor& h_prev, const ParamStore& store,
                        const GruCellParams& p, GruStepCache* cache = nullptr);

/// Backprop through one step. Accumulates parameter gradients in store and
/// writes dx, dh_prev.
void gru_cell_backward(const GruStepCache& cache, const Tensor& dh, ParamStore& store,
                       const GruCellParams& p, Tensor& dx, Tensor& dh_prev);

struct BiGruCache {
  std::size_t steps = 0;
  std::size_t batch = 0;
  std::vector<unsigned char> step_mask;  // T×B, empty = all valid
  std::vector<GruStepCache> fwd;
  std::vector<GruStepCache> bwd;
};

/// seq[T×B×d] → out[T×B×2H], out[t] = concat(forward h_t, backward h_t) with
/// zero initial states. At steps where step_mask[t·B + b] == 0 the hidden
/// state of row b is carried over unchanged, so trailing pads never reach
/// real positions in either direction.
Tensor bigru_forward(const Tensor& seq, const ParamStore& store, const GruCellParams& fwd,
                     const GruCellParams& bwd, std::span<const unsigned char> step_mask = {},
                     BiGruCache* cache = nullptr);

/// Returns dL/dseq and accumulates parameter gradients.
Tensor bigru_backward(const BiGruCache& cache, const Tensor& dout, ParamStore& store,
                      const GruCellParams& fwd, const GruCellParams& bwd);

}  // namespace finetype::nn
