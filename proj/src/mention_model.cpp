// SPDX-License-Identifier: Apache-2.0
#include "finetype/mention_model.hpp"

#include <algorithm>

#include "finetype/errors.hpp"

namespace finetype {

using nn::Activation;

std::string to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::none: return "none";
    case AttentionKind::scalar: return "scalar";
    case AttentionKind::dynamic: return "dynamic";
  }
  return "none";
}

AttentionKind parse_attention(const std::string& s) {
  if (s == "none") return AttentionKind::none;
  if (s == "scalar") return AttentionKind::scalar;
  if (s == "dynamic") return AttentionKind::dynamic;
  throw ConfigError("unknown attention kind '" + s + "' (expected none, scalar, dynamic)");
}

namespace {
template <typename Get>
MentionBatch batch_from(std::size_t n, Get get) {
  if (n == 0) throw DataError("empty mention batch");
  const std::size_t d = get(0).left.size();
  MentionBatch b{Tensor({n, d}), Tensor({n, d}), Tensor({n, d})};
  for (std::size_t i = 0; i < n; ++i) {
    const ContextTriple& t = get(i);
    if (t.left.size() != d || t.right.size() != d || t.mention.size() != d) {
      throw DimensionError("context triple " + std::to_string(i) + " is not of dimension " +
                           std::to_string(d));
    }
    std::copy(t.left.begin(), t.left.end(), b.left.row(i).begin());
    std::copy(t.right.begin(), t.right.end(), b.right.row(i).begin());
    std::copy(t.mention.begin(), t.mention.end(), b.mention.row(i).begin());
  }
  return b;
}
}  // namespace

MentionBatch MentionBatch::from_triples(std::span<const ContextTriple* const> triples) {
  return batch_from(triples.size(), [&](std::size_t i) -> const ContextTriple& { return *triples[i]; });
}

MentionBatch MentionBatch::from_triples(std::span<const ContextTriple> triples) {
  return batch_from(triples.size(), [&](std::size_t i) -> const ContextTriple& { return triples[i]; });
}

MentionModel::MentionModel(const MentionModelDims& dims, Rng& init_rng) : dims_(dims) {
  if (dims_.embed_dim == 0 || dims_.hidden == 0 || dims_.labels == 0) {
    throw ConfigError("mention model dimensions must be positive");
  }
  register_params(init_rng);
}

MentionModel::MentionModel(const MentionModelDims& dims, ParamStore params)
    : dims_(dims), params_(std::move(params)) {
  check_bound();
}

void MentionModel::register_params(Rng& rng) {
  const std::size_t d = dims_.embed_dim;
  if (dims_.attention == AttentionKind::scalar) {
    params_.add("mention.att_scalar", Tensor({3}));
  } else if (dims_.attention == AttentionKind::dynamic) {
    params_.add_initialized("mention.att_W", {d, 3}, rng);
    params_.add("mention.att_b", Tensor({3}));
  }
  params_.add_initialized("mention.W1", {3 * d, dims_.hidden}, rng);
  params_.add("mention.b1", Tensor({dims_.hidden}));
  params_.add_initialized("mention.W2", {dims_.hidden, dims_.labels}, rng);
  params_.add("mention.b2", Tensor({dims_.labels}));
}

void MentionModel::check_bound() const {
  Rng rng(0);
  MentionModel reference(dims_, rng);
  for (const auto& e : reference.params_) {
    if (!params_.contains(e.name)) throw DataError("checkpoint is missing parameter " + e.name);
    if (params_.value(e.name).shape() != e.value.shape()) {
      throw DimensionError("parameter " + e.name + " has shape " +
                           shape_str(params_.value(e.name).shape()) + ", model expects " +
                           shape_str(e.value.shape()));
    }
  }
  if (params_.size() != reference.params_.size()) {
    throw DataError("checkpoint has parameters this mention model does not use");
  }
}

void MentionModel::set_dropout(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  dropout_ = p;
}

Tensor MentionModel::attention_weights(const MentionBatch& batch) const {
  const std::size_t n = batch.size();
  switch (dims_.attention) {
    case AttentionKind::none:
      throw StateError("attention_weights: model has no attention");
    case AttentionKind::scalar: {
      const Tensor a = nn::activate(params_.value("mention.att_scalar").reshaped({1, 3}),
                                    Activation::softmax_lastdim);
      Tensor w({n, 3});
      for (std::size_t i = 0; i < n; ++i) std::copy_n(a.ptr(), 3, w.row(i).begin());
      return w;
    }
    case AttentionKind::dynamic: {
      const Tensor logits = nn::linear_forward(batch.mention, params_.value("mention.att_W"),
                                               params_.value("mention.att_b"));
      return nn::activate(logits, Activation::softmax_lastdim);
    }
  }
  return {};
}

Tensor MentionModel::run(const MentionBatch& batch, nn::Mode mode, Rng* dropout_rng,
                         Cache* cache) const {
  const std::size_t n = batch.size(), d = dims_.embed_dim;
  if (batch.left.cols() != d || batch.right.shape() != batch.left.shape() ||
      batch.mention.shape() != batch.left.shape()) {
    throw DimensionError("mention batch " + shape_str(batch.left.shape()) +
                         " does not match embedding dimension " + std::to_string(d));
  }
  Tensor weights;
  Tensor logits;
  if (dims_.attention == AttentionKind::dynamic) {
    logits = nn::linear_forward(batch.mention, params_.value("mention.att_W"),
                                params_.value("mention.att_b"));
    weights = nn::activate(logits, Activation::softmax_lastdim);
  } else if (dims_.attention == AttentionKind::scalar) {
    weights = attention_weights(batch);
  } else {
    weights = Tensor({n, 3}, 1.0);
  }

  Tensor combined({n, 3 * d});
  const Tensor* parts[3] = {&batch.left, &batch.right, &batch.mention};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      const double a = weights(i, k);
      for (std::size_t j = 0; j < d; ++j) combined(i, k * d + j) = a * (*parts[k])(i, j);
    }
  }

  Tensor pre_relu = nn::linear_forward(combined, params_.value("mention.W1"), params_.value("mention.b1"));
  Tensor hidden = nn::activate(pre_relu, Activation::relu);
  Rng unused(0);
  auto drop = nn::dropout_forward(hidden, dropout_, mode, dropout_rng ? *dropout_rng : unused);
  Tensor out = nn::linear_forward(drop.output, params_.value("mention.W2"), params_.value("mention.b2"));
  Tensor scores = nn::activate(out, Activation::sigmoid);
  if (cache) {
    *cache = {batch,  std::move(weights), std::move(logits), std::move(combined), std::move(pre_relu),
              std::move(hidden), std::move(drop.mask), std::move(drop.output), scores};
  }
  return scores;
}

Tensor MentionModel::score(const MentionBatch& batch) const {
  return run(batch, nn::Mode::eval, nullptr, nullptr);
}

Tensor MentionModel::forward(const MentionBatch& batch, nn::Mode mode, Rng& dropout_rng) {
  Cache cache;
  Tensor scores = run(batch, mode, &dropout_rng, &cache);
  cache_ = std::move(cache);
  return scores;
}

void MentionModel::backward(const Tensor& dscores) {
  if (!cache_) throw StateError("MentionModel::backward called before forward");
  const Cache& c = *cache_;
  require_same_shape(dscores, c.scores, "MentionModel::backward");
  const std::size_t n = c.batch.size(), d = dims_.embed_dim;

  const Tensor dout = nn::activate_backward({}, c.scores, dscores, Activation::sigmoid);
  const Tensor ddropped = nn::linear_backward(c.dropped, params_.value("mention.W2"), dout,
                                              params_.grad("mention.W2"), params_.grad("mention.b2"));
  const Tensor dhidden = nn::dropout_backward(ddropped, c.mask);
  const Tensor dpre = nn::activate_backward(c.pre_relu, c.hidden, dhidden, Activation::relu);
  const Tensor dcombined = nn::linear_backward(c.combined, params_.value("mention.W1"), dpre,
                                               params_.grad("mention.W1"), params_.grad("mention.b1"));

  if (dims_.attention != AttentionKind::none) {
    // dL/da_k = <dL/d(a_k c_k), c_k>; the contexts themselves are frozen.
    Tensor dweights({n, 3});
    const Tensor* parts[3] = {&c.batch.left, &c.batch.right, &c.batch.mention};
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < 3; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += dcombined(i, k * d + j) * (*parts[k])(i, j);
        dweights(i, k) = acc;
      }
    }
    if (dims_.attention == AttentionKind::scalar) {
      Tensor a({1, 3}), da({1, 3});
      for (std::size_t k = 0; k < 3; ++k) {
        a[k] = c.weights(0, k);
        for (std::size_t i = 0; i < n; ++i) da[k] += dweights(i, k);
      }
      const Tensor dlogit = nn::activate_backward({}, a, da, Activation::softmax_lastdim);
      Tensor& g = params_.grad("mention.att_scalar");
      for (std::size_t k = 0; k < 3; ++k) g[k] += dlogit[k];
    } else {
      const Tensor dlogits = nn::activate_backward(c.logits, c.weights, dweights, Activation::softmax_lastdim);
      nn::linear_backward(c.batch.mention, params_.value("mention.att_W"), dlogits,
                          params_.grad("mention.att_W"), params_.grad("mention.att_b"));
    }
  }
  cache_.reset();
}

double MentionModel::train_batch(const MentionBatch& batch, const Tensor& targets, nn::Mode mode,
                                 Rng& dropout_rng) {
  const Tensor scores = forward(batch, mode, dropout_rng);
  const double loss = mention_loss(scores, targets);
  backward(nn::bce_backward(scores, targets));
  return loss;
}

std::vector<std::size_t> mention_predict(std::span<const double> scores) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > 0.5) out.push_back(i);
  }
  if (out.empty() && !scores.empty()) {
    out.push_back(static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin()));
  }
  return out;
}

double mention_loss(const Tensor& scores, const Tensor& targets) {
  // Every row has N cells, so the mean over all cells equals the batch mean
  // of the per-example means.
  return nn::bce_loss(scores, targets);
}

}  // namespace finetype
