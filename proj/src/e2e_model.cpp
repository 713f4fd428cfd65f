// SPDX-License-Identifier: Apache-2.0
#include "finetype/e2e_model.hpp"

#include <algorithm>

#include "finetype/errors.hpp"

namespace finetype {

using nn::Activation;

namespace {
template <typename Get>
E2EBatch pack_from(std::size_t n, Get get) {
  if (n == 0) throw DataError("empty e2e batch");
  const std::size_t d = get(0).cols();
  std::size_t longest = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const Tensor& s = get(b);
    require_rank(s, 2, "E2EBatch::pack");
    if (s.cols() != d) throw DimensionError("sentence embeddings differ in dimension");
    longest = std::max(longest, s.rows());
  }
  E2EBatch batch{Tensor({longest, n, d}), std::vector<unsigned char>(longest * n, 0), {}};
  for (std::size_t b = 0; b < n; ++b) {
    const Tensor& s = get(b);
    batch.lengths.push_back(s.rows());
    for (std::size_t t = 0; t < s.rows(); ++t) {
      std::copy_n(s.ptr() + t * d, d, batch.seq.ptr() + (t * n + b) * d);
      batch.step_mask[t * n + b] = 1;
    }
  }
  return batch;
}
}  // namespace

E2EBatch E2EBatch::pack(std::span<const Tensor* const> sentences) {
  return pack_from(sentences.size(), [&](std::size_t i) -> const Tensor& { return *sentences[i]; });
}

E2EBatch E2EBatch::pack(std::span<const Tensor> sentences) {
  return pack_from(sentences.size(), [&](std::size_t i) -> const Tensor& { return sentences[i]; });
}

E2EModel::E2EModel(const E2EModelDims& dims, Rng& init_rng) : dims_(dims) {
  if (dims_.embed_dim == 0 || dims_.hidden == 0 || dims_.labels == 0) {
    throw ConfigError("e2e model dimensions must be positive");
  }
  fwd_ = nn::GruCellParams::create(params_, "e2e.gru_fwd", dims_.embed_dim, dims_.hidden, init_rng);
  bwd_ = nn::GruCellParams::create(params_, "e2e.gru_bwd", dims_.embed_dim, dims_.hidden, init_rng);
  w_out_ = params_.add_initialized("e2e.W_out", {2 * dims_.hidden, dims_.labels}, init_rng);
  b_out_ = params_.add("e2e.b_out", Tensor({dims_.labels}));
}

E2EModel::E2EModel(const E2EModelDims& dims, ParamStore params)
    : dims_(dims), params_(std::move(params)) {
  try {
    fwd_ = nn::GruCellParams::bind(params_, "e2e.gru_fwd");
    bwd_ = nn::GruCellParams::bind(params_, "e2e.gru_bwd");
    w_out_ = params_.index_of("e2e.W_out");
    b_out_ = params_.index_of("e2e.b_out");
  } catch (const StateError& e) {
    throw DataError(std::string("checkpoint does not hold an e2e model: ") + e.what());
  }
  Rng rng(0);
  E2EModel reference(dims_, rng);
  if (reference.params_.size() != params_.size()) {
    throw DataError("checkpoint parameter set does not match the e2e model");
  }
  for (const auto& e : reference.params_) {
    if (params_.value(e.name).shape() != e.value.shape()) {
      throw DimensionError("parameter " + e.name + " has shape " +
                           shape_str(params_.value(e.name).shape()) + ", model expects " +
                           shape_str(e.value.shape()));
    }
  }
}

void E2EModel::set_dropout(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  dropout_ = p;
}

Tensor E2EModel::run(const E2EBatch& batch, nn::Mode mode, Rng* dropout_rng, Cache* cache) const {
  if (batch.seq.dim(2) != dims_.embed_dim) {
    throw DimensionError("e2e batch " + shape_str(batch.seq.shape()) +
                         " does not match embedding dimension " + std::to_string(dims_.embed_dim));
  }
  const std::size_t rows = batch.steps() * batch.size();
  Tensor features = nn::bigru_forward(batch.seq, params_, fwd_, bwd_, batch.step_mask,
                                      cache ? &cache->gru : nullptr)
                        .reshaped({rows, 2 * dims_.hidden});
  Rng unused(0);
  auto drop = nn::dropout_forward(features, dropout_, mode, dropout_rng ? *dropout_rng : unused);
  Tensor logits = nn::linear_forward(drop.output, params_.entry(w_out_).value, params_.entry(b_out_).value);
  Tensor scores = nn::activate(logits, Activation::sigmoid);
  if (cache) {
    cache->features = std::move(features);
    cache->mask = std::move(drop.mask);
    cache->dropped = std::move(drop.output);
    cache->scores = scores;
  }
  return scores;
}

Tensor E2EModel::score(const E2EBatch& batch) const { return run(batch, nn::Mode::eval, nullptr, nullptr); }

Tensor E2EModel::score_sentence(const Tensor& embeddings) const {
  const Tensor* one[1] = {&embeddings};
  return score(E2EBatch::pack(std::span<const Tensor* const>(one)));
}

Tensor E2EModel::forward(const E2EBatch& batch, nn::Mode mode, Rng& dropout_rng) {
  Cache cache;
  Tensor scores = run(batch, mode, &dropout_rng, &cache);
  cache_ = std::move(cache);
  return scores;
}

void E2EModel::backward(const Tensor& dscores) {
  if (!cache_) throw StateError("E2EModel::backward called before forward");
  const Cache& c = *cache_;
  require_same_shape(dscores, c.scores, "E2EModel::backward");
  const Tensor dlogits = nn::activate_backward({}, c.scores, dscores, Activation::sigmoid);
  auto& wo = params_.entry(w_out_);
  auto& bo = params_.entry(b_out_);
  const Tensor ddropped = nn::linear_backward(c.dropped, wo.value, dlogits, wo.grad, bo.grad);
  const Tensor dfeatures = nn::dropout_backward(ddropped, c.mask);
  const Tensor dout = dfeatures.reshaped({c.gru.steps, c.gru.batch, 2 * dims_.hidden});
  nn::bigru_backward(c.gru, dout, params_, fwd_, bwd_);
  cache_.reset();
}

double E2EModel::train_batch(const E2EBatch& batch, const Tensor& targets, nn::Mode mode,
                             Rng& dropout_rng) {
  const Tensor scores = forward(batch, mode, dropout_rng);
  const double loss = e2e_loss(scores, targets, batch.step_mask);
  backward(nn::bce_backward(scores, targets, batch.step_mask));
  return loss;
}

double e2e_loss(const Tensor& scores, const Tensor& targets, std::span<const unsigned char> pad_mask) {
  return nn::bce_loss(scores, targets, pad_mask);
}

Tensor concat_layer(const Tensor& piece_scores, std::span<const std::size_t> word_index,
                    std::span<const unsigned char> is_pad, std::size_t words) {
  require_rank(piece_scores, 2, "concat_layer");
  if (word_index.size() != piece_scores.rows() || (!is_pad.empty() && is_pad.size() != word_index.size())) {
    throw DimensionError("concat_layer: " + std::to_string(word_index.size()) +
                         " word indices for scores " + shape_str(piece_scores.shape()));
  }
  const std::size_t n = piece_scores.cols();
  Tensor out({words, n});
  std::vector<std::size_t> counts(words, 0);
  for (std::size_t p = 0; p < word_index.size(); ++p) {
    if (!is_pad.empty() && is_pad[p]) continue;
    const std::size_t w = word_index[p];
    if (w >= words) throw DimensionError("concat_layer: piece maps to word " + std::to_string(w));
    ++counts[w];
    const double inv = 1.0 / static_cast<double>(counts[w]);
    for (std::size_t j = 0; j < n; ++j) out(w, j) += (piece_scores(p, j) - out(w, j)) * inv;
  }
  for (std::size_t w = 0; w < words; ++w) {
    if (!counts[w]) throw StateError("concat_layer: word " + std::to_string(w) + " has no wordpieces");
  }
  return out;
}

TokenPredictions e2e_predict(const Tensor& word_scores) {
  require_rank(word_scores, 2, "e2e_predict");
  TokenPredictions out{word_scores, std::vector<std::vector<std::size_t>>(word_scores.rows())};
  for (std::size_t w = 0; w < word_scores.rows(); ++w) {
    for (std::size_t j = 0; j < word_scores.cols(); ++j) {
      if (word_scores(w, j) > 0.5) out.word_labels[w].push_back(j);
    }
  }
  return out;
}

}  // namespace finetype
