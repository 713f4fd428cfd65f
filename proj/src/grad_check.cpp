// SPDX-License-Identifier: Apache-2.0
#include "finetype/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "finetype/errors.hpp"

namespace finetype {

bool GradCheckReport::passed() const {
  return std::all_of(params.begin(), params.end(), [](const ParamCheck& p) { return p.passed; });
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& p : params) w = std::max(w, p.max_relative_error);
  return w;
}

GradCheckReport grad_check(const LossClosure& loss, ParamStore& params,
                           const GradCheckOptions& options) {
  params.zero_grad();
  const double base = loss(true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& e : params) analytic.push_back(e.grad);
  params.zero_grad();

  const double again = loss(false);
  if (again != base) {
    throw StateError("grad_check: loss closure is not deterministic (" + std::to_string(base) +
                     " vs " + std::to_string(again) + ")");
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& entry = params.entry(p);
    ParamCheck check{entry.name};
    auto values = entry.value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = loss(false);
      values[i] = saved - options.step;
      const double down = loss(false);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[p][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max(std::abs(a) + std::abs(numeric), options.denominator_floor);
      check.max_abs_error = std::max(check.max_abs_error, abs_err);
      check.max_relative_error = std::max(check.max_relative_error, abs_err / denom);
    }
    check.passed = check.max_relative_error < options.tolerance;
    report.params.push_back(std::move(check));
  }
  params.zero_grad();
  return report;
}

}  // namespace finetype
