// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "finetype/context.hpp"
#include "finetype/nn.hpp"
#include "finetype/param_store.hpp"

namespace finetype {

enum class AttentionKind { none, scalar, dynamic };

std::string to_string(AttentionKind kind);
AttentionKind parse_attention(const std::string& s);

struct MentionModelDims {
  std::size_t embed_dim = 0;
  std::size_t hidden = 768;
  std::size_t labels = 0;
  AttentionKind attention = AttentionKind::none;
};

/// A batch of context triples laid out as three [B×d] matrices.
struct MentionBatch {
  Tensor left, right, mention;
  std::size_t size() const { return left.rows(); }
  static MentionBatch from_triples(std::span<const ContextTriple* const> triples);
  static MentionBatch from_triples(std::span<const ContextTriple> triples);
};

/// Mention-level typing model:
///
///   (a_l, a_r, a_m) = softmax(ã)                    scalar attention
///                   = softmax(c_m·W_att + b_att)     dynamic attention
///                   = (1, 1, 1)                      no attention
///   c_c    = [a_l·c_l, a_r·c_r, a_m·c_m]
///   h      = dropout(relu(c_c·W1 + b1))
///   scores = sigmoid(h·W2 + b2)
///
/// Parameters live in one ParamStore under the "mention." prefix.
class MentionModel {
 public:
  MentionModel(const MentionModelDims& dims, Rng& init_rng);
  /// Wraps parameters restored from a checkpoint; names and shapes must
  /// match what the constructor registers for dims.
  MentionModel(const MentionModelDims& dims, ParamStore params);

  const MentionModelDims& dims() const noexcept { return dims_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  /// Dropout probability applied before the output layer in train mode.
  void set_dropout(double p);
  double dropout() const noexcept { return dropout_; }

  /// [B×3] attention weights; StateError for AttentionKind::none.
  Tensor attention_weights(const MentionBatch& batch) const;

  /// Inference scores [B×N], dropout off. Safe to call concurrently.
  Tensor score(const MentionBatch& batch) const;

  /// Training forward pass; records what backward() needs.
  Tensor forward(const MentionBatch& batch, nn::Mode mode, Rng& dropout_rng);
  /// Accumulates parameter gradients from dL/dscores. StateError if no
  /// forward pass has been recorded since the last backward.
  void backward(const Tensor& dscores);

  /// forward + BCE + backward; returns the batch loss.
  double train_batch(const MentionBatch& batch, const Tensor& targets, nn::Mode mode,
                     Rng& dropout_rng);

 private:
  struct Cache {
    MentionBatch batch;
    Tensor weights, logits, combined, pre_relu, hidden, mask, dropped, scores;
  };
  Tensor run(const MentionBatch& batch, nn::Mode mode, Rng* dropout_rng, Cache* cache) const;
  void register_params(Rng& rng);
  void check_bound() const;

  MentionModelDims dims_;
  ParamStore params_;
  std::optional<Cache> cache_;
  double dropout_ = 0.5;
};

/// Labels with score > 0.5, or the single highest-scoring label (lowest
/// index on ties) when none clears the threshold. Never empty for N ≥ 1.
std::vector<std::size_t> mention_predict(std::span<const double> scores);

/// Per-example mean BCE averaged over the batch.
double mention_loss(const Tensor& scores, const Tensor& targets);

}  // namespace finetype
