// SPDX-License-Identifier: Apache-2.0
#include "finetype/param_store.hpp"

#include <cmath>

#include "finetype/errors.hpp"

namespace finetype {

std::size_t ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw StateError("duplicate parameter name: " + name);
  const Shape shape = value.shape();
  entries_.push_back({name, std::move(value), Tensor(shape), Tensor(shape), Tensor(shape)});
  index_.emplace(name, entries_.size() - 1);
  return entries_.size() - 1;
}

std::size_t ParamStore::add_initialized(const std::string& name, Shape shape, Rng& rng) {
  Tensor t(shape);
  if (shape.size() == 2) {
    const double a = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
    for (auto& x : t.data()) x = rng.uniform(-a, a);
  }
  return add(name, std::move(t));
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw StateError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

void ParamStore::adam_step(const AdamConfig& cfg) {
  for (const auto& e : entries_) {
    if (!e.grad.all_finite()) throw NumericError("non-finite gradient in parameter " + e.name);
  }
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& e : entries_) {
    auto v = e.value.data();
    auto g = e.grad.data();
    auto m1 = e.moment1.data();
    auto m2 = e.moment2.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g[i];
      m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m1[i] / c1;
      const double vhat = m2[i] / c2;
      v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      g[i] = 0.0;
    }
  }
}

}  // namespace finetype
