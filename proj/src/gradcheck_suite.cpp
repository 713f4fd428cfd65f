// SPDX-License-Identifier: Apache-2.0
#include "finetype/gradcheck_suite.hpp"

#include "finetype/e2e_model.hpp"
#include "finetype/errors.hpp"
#include "finetype/nn.hpp"

namespace finetype {

using nn::Activation;

std::string to_string(LayerCase c) {
  switch (c) {
    case LayerCase::linear_sigmoid_bce: return "linear+sigmoid+bce";
    case LayerCase::relu: return "relu";
    case LayerCase::tanh: return "tanh";
    case LayerCase::softmax: return "softmax";
    case LayerCase::dropout: return "dropout";
    case LayerCase::gru_cell: return "gru_cell";
    case LayerCase::bigru: return "bigru";
  }
  return "?";
}

std::vector<LayerCase> all_layer_cases() {
  return {LayerCase::linear_sigmoid_bce, LayerCase::relu, LayerCase::tanh, LayerCase::softmax,
          LayerCase::dropout, LayerCase::gru_cell, LayerCase::bigru};
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = rng.uniform(-scale, scale);
  return t;
}

Tensor random_targets(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = rng.uniform() < 0.5 ? 1.0 : 0.0;
  return t;
}

// Scalar read-out used after layers whose output is not already a score:
// loss = Σ weights ⊙ y, so dL/dy = weights.
double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * w[i];
  return s;
}

}  // namespace

GradCheckReport gradcheck_layer(LayerCase c, std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  ParamStore store;
  const std::size_t batch = 3, in = 4, out = 3;
  const Tensor x = random_tensor({batch, in}, rng);
  store.add_initialized("W", {in, out}, rng);
  store.add("b", random_tensor({out}, rng, 0.5));

  switch (c) {
    case LayerCase::linear_sigmoid_bce: {
      const Tensor y = random_targets({batch, out}, rng);
      return grad_check(
          [&](bool grad) {
            const Tensor z = nn::linear_forward(x, store.value("W"), store.value("b"));
            const Tensor s = nn::activate(z, Activation::sigmoid);
            const double loss = nn::bce_loss(s, y);
            if (grad) {
              const Tensor dz = nn::activate_backward(z, s, nn::bce_backward(s, y), Activation::sigmoid);
              nn::linear_backward(x, store.value("W"), dz, store.grad("W"), store.grad("b"));
            }
            return loss;
          },
          store, opts);
    }
    case LayerCase::relu:
    case LayerCase::tanh:
    case LayerCase::softmax: {
      const Activation kind = c == LayerCase::relu   ? Activation::relu
                              : c == LayerCase::tanh ? Activation::tanh
                                                     : Activation::softmax_lastdim;
      const Tensor w = random_tensor({batch, out}, rng);
      return grad_check(
          [&](bool grad) {
            const Tensor z = nn::linear_forward(x, store.value("W"), store.value("b"));
            const Tensor a = nn::activate(z, kind);
            if (grad) {
              const Tensor dz = nn::activate_backward(z, a, w, kind);
              nn::linear_backward(x, store.value("W"), dz, store.grad("W"), store.grad("b"));
            }
            return weighted_sum(a, w);
          },
          store, opts);
    }
    case LayerCase::dropout: {
      const Tensor w = random_tensor({batch, out}, rng);
      return grad_check(
          [&](bool grad) {
            Rng mask_rng(seed + 17);
            const Tensor z = nn::linear_forward(x, store.value("W"), store.value("b"));
            const auto d = nn::dropout_forward(z, 0.5, nn::Mode::train, mask_rng);
            if (grad) {
              const Tensor dz = nn::dropout_backward(w, d.mask);
              nn::linear_backward(x, store.value("W"), dz, store.grad("W"), store.grad("b"));
            }
            return weighted_sum(d.output, w);
          },
          store, opts);
    }
    case LayerCase::gru_cell: {
      ParamStore gru_store;
      const std::size_t hidden = 4;
      const auto p = nn::GruCellParams::create(gru_store, "cell", in, hidden, rng);
      for (auto& e : gru_store) {
        if (e.value.rank() == 1) e.value = random_tensor(e.value.shape(), rng, 0.5);
      }
      const Tensor h0 = random_tensor({batch, hidden}, rng, 0.9);
      const Tensor w = random_tensor({batch, hidden}, rng);
      return grad_check(
          [&](bool grad) {
            nn::GruStepCache cache;
            const Tensor h = nn::gru_cell_forward(x, h0, gru_store, p, &cache);
            if (grad) {
              Tensor dx, dh_prev;
              nn::gru_cell_backward(cache, w, gru_store, p, dx, dh_prev);
            }
            return weighted_sum(h, w);
          },
          gru_store, opts);
    }
    case LayerCase::bigru: {
      ParamStore gru_store;
      const std::size_t steps = 5, hidden = 3;
      const auto fwd = nn::GruCellParams::create(gru_store, "fwd", in, hidden, rng);
      const auto bwd = nn::GruCellParams::create(gru_store, "bwd", in, hidden, rng);
      for (auto& e : gru_store) {
        if (e.value.rank() == 1) e.value = random_tensor(e.value.shape(), rng, 0.5);
      }
      const Tensor seq = random_tensor({steps, 2, in}, rng);
      // Second sequence is 3 steps long followed by 2 pads.
      std::vector<unsigned char> mask(steps * 2, 1);
      mask[3 * 2 + 1] = 0;
      mask[4 * 2 + 1] = 0;
      const Tensor w = random_tensor({steps, 2, 2 * hidden}, rng);
      return grad_check(
          [&](bool grad) {
            nn::BiGruCache cache;
            const Tensor outp = nn::bigru_forward(seq, gru_store, fwd, bwd, mask, &cache);
            double loss = 0.0;
            Tensor dout(outp.shape());
            for (std::size_t t = 0; t < steps; ++t) {
              for (std::size_t b = 0; b < 2; ++b) {
                if (!mask[t * 2 + b]) continue;
                for (std::size_t j = 0; j < 2 * hidden; ++j) {
                  const std::size_t i = (t * 2 + b) * 2 * hidden + j;
                  loss += outp[i] * w[i];
                  dout[i] = w[i];
                }
              }
            }
            if (grad) nn::bigru_backward(cache, dout, gru_store, fwd, bwd);
            return loss;
          },
          gru_store, opts);
    }
  }
  throw StateError("unknown layer case");
}

GradCheckReport gradcheck_mention_model(AttentionKind attention, std::uint64_t seed,
                                        const GradCheckOptions& opts) {
  Rng rng(seed);
  const std::size_t d = 4, labels = 5, batch = 2;
  MentionModel model({d, 6, labels, attention}, rng);
  for (auto& e : model.params()) {
    if (e.value.rank() == 1) {
      for (auto& v : e.value.data()) v = rng.uniform(-0.5, 0.5);
    }
  }
  std::vector<ContextTriple> triples(batch);
  for (auto& t : triples) {
    for (auto* v : {&t.left, &t.right, &t.mention}) {
      v->resize(d);
      for (auto& x : *v) x = rng.uniform(-1.0, 1.0);
    }
  }
  const MentionBatch mb = MentionBatch::from_triples(std::span<const ContextTriple>(triples));
  const Tensor y = random_targets({batch, labels}, rng);
  return grad_check(
      [&](bool grad) {
        Rng dropout_rng(seed + 101);
        if (grad) return model.train_batch(mb, y, nn::Mode::train, dropout_rng);
        return mention_loss(model.forward(mb, nn::Mode::train, dropout_rng), y);
      },
      model.params(), opts);
}

GradCheckReport gradcheck_e2e_model(std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  const std::size_t d = 3, labels = 4, hidden = 5;
  E2EModel model({d, hidden, labels}, rng);
  for (auto& e : model.params()) {
    if (e.value.rank() == 1) {
      for (auto& v : e.value.data()) v = rng.uniform(-0.5, 0.5);
    }
  }
  std::vector<Tensor> sentences{random_tensor({6, d}, rng), random_tensor({4, d}, rng)};
  const E2EBatch batch = E2EBatch::pack(std::span<const Tensor>(sentences));
  const Tensor y = random_targets({batch.steps() * batch.size(), labels}, rng);
  return grad_check(
      [&](bool grad) {
        Rng dropout_rng(seed + 202);
        if (grad) return model.train_batch(batch, y, nn::Mode::train, dropout_rng);
        return e2e_loss(model.forward(batch, nn::Mode::train, dropout_rng), y, batch.step_mask);
      },
      model.params(), opts);
}

}  // namespace finetype
