// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "finetype/nn.hpp"
#include "finetype/param_store.hpp"
#include "finetype/wordpiece.hpp"

namespace finetype {

struct E2EModelDims {
  std::size_t embed_dim = 0;
  std::size_t hidden = 768;  // per direction
  std::size_t labels = 0;
};

/// Sentences padded to a common length, time-major: seq is [T×B×d] and
/// step_mask[t·B + b] is 1 for real wordpieces, 0 for padding.
struct E2EBatch {
  Tensor seq;
  std::vector<unsigned char> step_mask;
  std::vector<std::size_t> lengths;

  std::size_t steps() const { return seq.dim(0); }
  std::size_t size() const { return seq.dim(1); }
  /// Row of sentence b, step t in the [T·B × N] score matrix.
  std::size_t row(std::size_t t, std::size_t b) const { return t * size() + b; }

  /// Pads each [L_i×d] embedding matrix with zero vectors to the longest L_i.
  static E2EBatch pack(std::span<const Tensor* const> sentences);
  static E2EBatch pack(std::span<const Tensor> sentences);
};

/// End-to-end typing model: a single-layer Bi-GRU over wordpiece embeddings
/// followed by a per-wordpiece sigmoid head,
///   scores_t = sigmoid(dropout([→h_t, ←h_t])·W_out + b_out).
/// Parameters use the "e2e." prefix.
class E2EModel {
 public:
  E2EModel(const E2EModelDims& dims, Rng& init_rng);
  E2EModel(const E2EModelDims& dims, ParamStore params);

  const E2EModelDims& dims() const noexcept { return dims_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  void set_dropout(double p);
  double dropout() const noexcept { return dropout_; }

  /// [T·B × N] wordpiece scores, dropout off. Safe to call concurrently.
  Tensor score(const E2EBatch& batch) const;
  /// [T×N] scores for one sentence's [T×d] embeddings.
  Tensor score_sentence(const Tensor& embeddings) const;

  Tensor forward(const E2EBatch& batch, nn::Mode mode, Rng& dropout_rng);
  void backward(const Tensor& dscores);

  /// forward + masked BCE + backward; returns the batch loss.
  double train_batch(const E2EBatch& batch, const Tensor& targets, nn::Mode mode, Rng& dropout_rng);

 private:
  struct Cache {
    nn::BiGruCache gru;
    Tensor features, mask, dropped, scores;
  };
  Tensor run(const E2EBatch& batch, nn::Mode mode, Rng* dropout_rng, Cache* cache) const;

  E2EModelDims dims_;
  ParamStore params_;
  nn::GruCellParams fwd_{}, bwd_{};
  std::size_t w_out_ = 0, b_out_ = 0;
  std::optional<Cache> cache_;
  double dropout_ = 0.5;
};

/// Mean BCE over every label cell of every non-pad wordpiece in the batch.
double e2e_loss(const Tensor& scores, const Tensor& targets, std::span<const unsigned char> pad_mask);

/// Averages wordpiece score rows per source word: [T×N] → [words×N].
/// Pad pieces are skipped. A word with no pieces is an internal error.
Tensor concat_layer(const Tensor& piece_scores, std::span<const std::size_t> word_index,
                    std::span<const unsigned char> is_pad, std::size_t words);

struct TokenPredictions {
  Tensor word_scores;
  std::vector<std::vector<std::size_t>> word_labels;
};

/// Per-token threshold at > 0.5. Empty label sets are allowed.
TokenPredictions e2e_predict(const Tensor& word_scores);

}  // namespace finetype
