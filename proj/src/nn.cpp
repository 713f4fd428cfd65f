// SPDX-License-Identifier: Apache-2.0
#include "finetype/nn.hpp"

#include <algorithm>
#include <cmath>

#include "finetype/errors.hpp"
#include "finetype/kernels.hpp"

namespace finetype::nn {

namespace {

kernels::GemmDims dims_for(const Tensor& x, const Tensor& w, const char* what) {
  require_rank(x, 2, what);
  require_rank(w, 2, what);
  if (x.cols() != w.rows()) {
    throw DimensionError(std::string(what) + ": cannot multiply " + shape_str(x.shape()) + " by " +
                         shape_str(w.shape()));
  }
  return {x.rows(), x.cols(), w.cols()};
}

void require_finite_input(const Tensor& x, const char* what) {
  for (double v : x.data()) {
    if (std::isnan(v)) throw NumericError(std::string(what) + ": NaN input");
  }
}

// Elementwise helpers.
Tensor hadamard(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

}  // namespace

Tensor matmul(const Tensor& x, const Tensor& w) {
  const auto d = dims_for(x, w, "matmul");
  Tensor y({d.batch, d.out});
  kernels::parallel::gemm_bias(x.data(), w.data(), {}, y.data(), d);
  return y;
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  const auto d = dims_for(x, w, "linear_forward");
  if (b.numel() != d.out) {
    throw DimensionError("linear_forward: bias " + shape_str(b.shape()) + " does not match W " +
                         shape_str(w.shape()));
  }
  Tensor y({d.batch, d.out});
  kernels::parallel::gemm_bias(x.data(), w.data(), b.data(), y.data(), d);
  return y;
}

Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db) {
  const auto d = dims_for(x, w, "linear_backward");
  if (dy.rank() != 2 || dy.rows() != d.batch || dy.cols() != d.out) {
    throw DimensionError("linear_backward: upstream gradient " + shape_str(dy.shape()) +
                         " does not match output [" + std::to_string(d.batch) + "x" +
                         std::to_string(d.out) + "]");
  }
  kernels::parallel::gemm_at_b_acc(x.data(), dy.data(), dw.data(), d);
  kernels::parallel::colsum_acc(dy.data(), db.data(), d);
  Tensor dx({d.batch, d.in});
  kernels::parallel::gemm_a_bt(dy.data(), w.data(), dx.data(), d, false);
  return dx;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor activate(const Tensor& x, Activation kind) {
  require_finite_input(x, "activate");
  Tensor y(x.shape());
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < x.numel(); ++i) y[i] = sigmoid(x[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
      break;
    case Activation::softmax_lastdim: {
      const std::size_t n = x.shape().back();
      const std::size_t rows = x.numel() / n;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x.ptr() + r * n;
        double* out = y.ptr() + r * n;
        const double mx = *std::max_element(in, in + n);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += (out[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
      }
      break;
    }
  }
  return y;
}

Tensor activate_backward(const Tensor& x, const Tensor& y, const Tensor& dy, Activation kind) {
  require_same_shape(y, dy, "activate_backward");
  Tensor dx(y.shape());
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = x[i] > 0 ? dy[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
      break;
    case Activation::softmax_lastdim: {
      const std::size_t n = y.shape().back();
      const std::size_t rows = y.numel() / n;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = y.ptr() + r * n;
        const double* gr = dy.ptr() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += yr[j] * gr[j];
        for (std::size_t j = 0; j < n; ++j) dx[r * n + j] = yr[j] * (gr[j] - dot);
      }
      break;
    }
  }
  return dx;
}

DropoutResult dropout_forward(const Tensor& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(p));
  }
  Tensor mask(x.shape(), 1.0);
  if (mode == Mode::eval || p == 0.0) return {x, std::move(mask)};
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    y[i] = x[i] * mask[i];
  }
  return {std::move(y), std::move(mask)};
}

Tensor dropout_backward(const Tensor& dy, const Tensor& mask) {
  require_same_shape(dy, mask, "dropout_backward");
  return hadamard(dy, mask);
}

namespace {

struct BceLayout {
  std::size_t rows;
  std::size_t labels;
};

BceLayout bce_layout(const Tensor& scores, const Tensor& targets,
                     std::span<const unsigned char> row_mask) {
  require_same_shape(scores, targets, "bce_loss");
  const std::size_t n = scores.shape().back();
  const std::size_t rows = scores.numel() / n;
  if (!row_mask.empty() && row_mask.size() != rows) {
    throw DimensionError("bce_loss: row mask has " + std::to_string(row_mask.size()) +
                         " entries for " + std::to_string(rows) + " rows");
  }
  for (double t : targets.data()) {
    if (t != 0.0 && t != 1.0) throw DataError("bce_loss: target " + std::to_string(t) + " is not 0 or 1");
  }
  return {rows, n};
}

inline double clamp_score(double s) {
  return std::clamp(s, kScoreClamp, 1.0 - kScoreClamp);
}

}  // namespace

double bce_loss(const Tensor& scores, const Tensor& targets, std::span<const unsigned char> row_mask) {
  const auto [rows, n] = bce_layout(scores, targets, row_mask);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_mask.empty() && !row_mask[r]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const double s = clamp_score(scores[r * n + j]);
      const double y = targets[r * n + j];
      total += -y * std::log(s) - (1.0 - y) * std::log(1.0 - s);
    }
    count += n;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

Tensor bce_backward(const Tensor& scores, const Tensor& targets,
                    std::span<const unsigned char> row_mask) {
  const auto [rows, n] = bce_layout(scores, targets, row_mask);
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_mask.empty() || row_mask[r]) count += n;
  }
  Tensor grad(scores.shape());
  if (!count) return grad;
  const double scale = 1.0 / static_cast<double>(count);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_mask.empty() && !row_mask[r]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      // Evaluated at the clamped score; the clamp itself is passed through
      // so saturated outputs keep receiving gradient.
      const double s = clamp_score(scores[r * n + j]);
      const double y = targets[r * n + j];
      grad[r * n + j] = scale * (-y / s + (1.0 - y) / (1.0 - s));
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

GruCellParams GruCellParams::create(ParamStore& store, const std::string& prefix,
                                    std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  GruCellParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_z = store.add_initialized(prefix + ".W_z", {input_dim, hidden_dim}, rng);
  p.w_r = store.add_initialized(prefix + ".W_r", {input_dim, hidden_dim}, rng);
  p.w_h = store.add_initialized(prefix + ".W_h", {input_dim, hidden_dim}, rng);
  p.u_z = store.add_initialized(prefix + ".U_z", {hidden_dim, hidden_dim}, rng);
  p.u_r = store.add_initialized(prefix + ".U_r", {hidden_dim, hidden_dim}, rng);
  p.u_h = store.add_initialized(prefix + ".U_h", {hidden_dim, hidden_dim}, rng);
  p.b_z = store.add_initialized(prefix + ".b_z", {hidden_dim}, rng);
  p.b_r = store.add_initialized(prefix + ".b_r", {hidden_dim}, rng);
  p.b_h = store.add_initialized(prefix + ".b_h", {hidden_dim}, rng);
  return p;
}

GruCellParams GruCellParams::bind(const ParamStore& store, const std::string& prefix) {
  GruCellParams p;
  p.w_z = store.index_of(prefix + ".W_z");
  p.w_r = store.index_of(prefix + ".W_r");
  p.w_h = store.index_of(prefix + ".W_h");
  p.u_z = store.index_of(prefix + ".U_z");
  p.u_r = store.index_of(prefix + ".U_r");
  p.u_h = store.index_of(prefix + ".U_h");
  p.b_z = store.index_of(prefix + ".b_z");
  p.b_r = store.index_of(prefix + ".b_r");
  p.b_h = store.index_of(prefix + ".b_h");
  const Tensor& w = store.entry(p.w_z).value;
  p.input_dim = w.rows();
  p.hidden_dim = w.cols();
  return p;
}

Tensor gru_cell_forward(const Tensor& x, const Tensor& h_prev, const ParamStore& store,
                        const GruCellParams& p, GruStepCache* cache) {
  require_rank(x, 2, "gru_cell_forward");
  require_rank(h_prev, 2, "gru_cell_forward");
  if (x.cols() != p.input_dim || h_prev.cols() != p.hidden_dim || x.rows() != h_prev.rows()) {
    throw DimensionError("gru_cell_forward: x " + shape_str(x.shape()) + " and h " +
                         shape_str(h_prev.shape()) + " do not fit a cell with input " +
                         std::to_string(p.input_dim) + ", hidden " + std::to_string(p.hidden_dim));
  }
  auto val = [&](std::size_t i) -> const Tensor& { return store.entry(i).value; };

  Tensor az = linear_forward(x, val(p.w_z), val(p.b_z));
  add_inplace(az, matmul(h_prev, val(p.u_z)));
  Tensor z = activate(az, Activation::sigmoid);

  Tensor ar = linear_forward(x, val(p.w_r), val(p.b_r));
  add_inplace(ar, matmul(h_prev, val(p.u_r)));
  Tensor r = activate(ar, Activation::sigmoid);

  Tensor rh = hadamard(r, h_prev);
  Tensor ah = linear_forward(x, val(p.w_h), val(p.b_h));
  add_inplace(ah, matmul(rh, val(p.u_h)));
  Tensor h_tilde = activate(ah, Activation::tanh);

  Tensor h(h_prev.shape());
  for (std::size_t i = 0; i < h.numel(); ++i) {
    h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * h_tilde[i];
  }
  if (cache) {
    *cache = {x, h_prev, std::move(z), std::move(r), std::move(h_tilde), std::move(rh)};
  }
  return h;
}

void gru_cell_backward(const GruStepCache& c, const Tensor& dh, ParamStore& store,
                       const GruCellParams& p, Tensor& dx, Tensor& dh_prev) {
  require_same_shape(dh, c.h_prev, "gru_cell_backward");
  auto e = [&store](std::size_t i) -> ParamEntry& { return store.entry(i); };
  const std::size_t n = dh.numel();

  Tensor da_z(dh.shape()), da_h(dh.shape());
  dh_prev = Tensor(dh.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double dz = dh[i] * (c.h_tilde[i] - c.h_prev[i]);
    const double dht = dh[i] * c.z[i];
    dh_prev[i] = dh[i] * (1.0 - c.z[i]);
    da_z[i] = dz * c.z[i] * (1.0 - c.z[i]);
    da_h[i] = dht * (1.0 - c.h_tilde[i] * c.h_tilde[i]);
  }

  // Candidate path: a_h = x·W_h + (r⊙h)·U_h + b_h
  dx = linear_backward(c.x, e(p.w_h).value, da_h, e(p.w_h).grad, e(p.b_h).grad);
  Tensor scratch_bias(Shape{p.hidden_dim});
  Tensor d_rh = linear_backward(c.rh, e(p.u_h).value, da_h, e(p.u_h).grad, scratch_bias);
  Tensor da_r(dh.shape());
  for (std::size_t i = 0; i < n; ++i) {
    dh_prev[i] += d_rh[i] * c.r[i];
    const double dr = d_rh[i] * c.h_prev[i];
    da_r[i] = dr * c.r[i] * (1.0 - c.r[i]);
  }

  // Gates: a_g = x·W_g + h·U_g + b_g
  add_inplace(dx, linear_backward(c.x, e(p.w_z).value, da_z, e(p.w_z).grad, e(p.b_z).grad));
  add_inplace(dh_prev, linear_backward(c.h_prev, e(p.u_z).value, da_z, e(p.u_z).grad, scratch_bias));
  add_inplace(dx, linear_backward(c.x, e(p.w_r).value, da_r, e(p.w_r).grad, e(p.b_r).grad));
  add_inplace(dh_prev, linear_backward(c.h_prev, e(p.u_r).value, da_r, e(p.u_r).grad, scratch_bias));
}

namespace {

Tensor time_slice(const Tensor& seq, std::size_t t) {
  const std::size_t b = seq.dim(1), d = seq.dim(2);
  Tensor out({b, d});
  std::copy_n(seq.ptr() + t * b * d, b * d, out.ptr());
  return out;
}

void write_half(Tensor& out, std::size_t t, const Tensor& h, std::size_t offset) {
  const std::size_t b = out.dim(1), w = out.dim(2), hd = h.cols();
  for (std::size_t i = 0; i < b; ++i) {
    std::copy_n(h.ptr() + i * hd, hd, out.ptr() + (t * b + i) * w + offset);
  }
}

Tensor read_half(const Tensor& out, std::size_t t, std::size_t offset, std::size_t hd) {
  const std::size_t b = out.dim(1), w = out.dim(2);
  Tensor h({b, hd});
  for (std::size_t i = 0; i < b; ++i) {
    std::copy_n(out.ptr() + (t * b + i) * w + offset, hd, h.ptr() + i * hd);
  }
  return h;
}

// Rows whose step is masked keep h_prev.
void carry_masked(Tensor& h, const Tensor& h_prev, std::span<const unsigned char> mask,
                  std::size_t t) {
  if (mask.empty()) return;
  const std::size_t b = h.rows(), hd = h.cols();
  for (std::size_t i = 0; i < b; ++i) {
    if (!mask[t * b + i]) std::copy_n(h_prev.ptr() + i * hd, hd, h.ptr() + i * hd);
  }
}

}  // namespace

Tensor bigru_forward(const Tensor& seq, const ParamStore& store, const GruCellParams& fwd,
                     const GruCellParams& bwd, std::span<const unsigned char> step_mask,
                     BiGruCache* cache) {
  if (seq.empty()) throw DataError("bigru_forward: empty sequence");
  require_rank(seq, 3, "bigru_forward");
  const std::size_t steps = seq.dim(0), batch = seq.dim(1);
  if (!step_mask.empty() && step_mask.size() != steps * batch) {
    throw DimensionError("bigru_forward: step mask size " + std::to_string(step_mask.size()) +
                         " does not match " + shape_str(seq.shape()));
  }
  const std::size_t hf = fwd.hidden_dim, hb = bwd.hidden_dim;
  Tensor out({steps, batch, hf + hb});
  if (cache) {
    cache->steps = steps;
    cache->batch = batch;
    cache->step_mask.assign(step_mask.begin(), step_mask.end());
    cache->fwd.assign(steps, {});
    cache->bwd.assign(steps, {});
  }

  Tensor h({batch, hf});
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor next = gru_cell_forward(time_slice(seq, t), h, store, fwd, cache ? &cache->fwd[t] : nullptr);
    carry_masked(next, h, step_mask, t);
    h = std::move(next);
    write_half(out, t, h, 0);
  }
  Tensor g({batch, hb});
  for (std::size_t t = steps; t-- > 0;) {
    Tensor next = gru_cell_forward(time_slice(seq, t), g, store, bwd, cache ? &cache->bwd[t] : nullptr);
    carry_masked(next, g, step_mask, t);
    g = std::move(next);
    write_half(out, t, g, hf);
  }
  return out;
}

Tensor bigru_backward(const BiGruCache& cache, const Tensor& dout, ParamStore& store,
                      const GruCellParams& fwd, const GruCellParams& bwd) {
  if (cache.fwd.empty()) throw StateError("bigru_backward called before bigru_forward");
  const std::size_t steps = cache.steps, batch = cache.batch;
  const std::size_t hf = fwd.hidden_dim, hb = bwd.hidden_dim, d = fwd.input_dim;
  if (dout.shape() != Shape{steps, batch, hf + hb}) {
    throw DimensionError("bigru_backward: gradient " + shape_str(dout.shape()) +
                         " does not match the cached forward pass");
  }
  const std::span<const unsigned char> mask = cache.step_mask;
  Tensor dseq({steps, batch, d});

  auto run_direction = [&](const std::vector<GruStepCache>& steps_cache, const GruCellParams& p,
                           std::size_t offset, std::size_t hd, bool forward_in_time) {
    Tensor carry({batch, hd});  // dL/dh flowing from the next processed step
    for (std::size_t k = 0; k < steps; ++k) {
      const std::size_t t = forward_in_time ? steps - 1 - k : k;
      Tensor dh = read_half(dout, t, offset, hd);
      add_inplace(dh, carry);
      // Masked rows passed h_prev straight through: route their gradient
      // directly to the previous step and keep it out of the cell.
      Tensor passthrough({batch, hd});
      if (!mask.empty()) {
        for (std::size_t i = 0; i < batch; ++i) {
          if (mask[t * batch + i]) continue;
          for (std::size_t j = 0; j < hd; ++j) {
            passthrough(i, j) = dh(i, j);
            dh(i, j) = 0.0;
          }
        }
      }
      Tensor dx, dh_prev;
      gru_cell_backward(steps_cache[t], dh, store, p, dx, dh_prev);
      add_inplace(dh_prev, passthrough);
      carry = std::move(dh_prev);
      double* dst = dseq.ptr() + t * batch * d;
      for (std::size_t i = 0; i < batch * d; ++i) dst[i] += dx[i];
    }
  };
  run_direction(cache.fwd, fwd, 0, hf, true);
  run_direction(cache.bwd, bwd, hf, hb, false);
  return dseq;
}

}  // namespace finetype::nn
