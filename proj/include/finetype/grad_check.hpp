// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "finetype/param_store.hpp"

namespace finetype {

/// Evaluates the loss for the current parameter values. When
/// accumulate_gradients is true the closure must also run its backward pass,
/// adding analytic gradients into the store (which the harness zeroes first).
using LossClosure = std::function<double(bool accumulate_gradients)>;

struct ParamCheck {
  std::string name;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double tolerance = 0.0;
  bool passed() const;
  double worst() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error |a − n| / max(|a| + |n|, floor).
  double denominator_floor = 1e-6;
};

/// Compares analytic gradients against central finite differences for every
/// element of every parameter. Throws StateError if two evaluations of the
/// closure at identical parameters disagree.
GradCheckReport grad_check(const LossClosure& loss, ParamStore& params,
                           const GradCheckOptions& options = {});

}  // namespace finetype
