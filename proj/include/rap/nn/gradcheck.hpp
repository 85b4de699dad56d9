#pragma once

#include "rap/nn/parameters.hpp"

#include <functional>
#include <string>

namespace rap::nn {

struct GradCheckReport {
  double max_relative_error = 0;
  double max_absolute_error = 0;
  std::string worst_coordinate;
  Eigen::Index checked = 0;
  bool passed = true;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps coordinates
/// whose true gradient is ~0 from being judged on rounding noise alone.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// f(x, grad) returns the objective and, when grad is non-null, writes the
/// analytic gradient. Every coordinate is checked with central differences.
using Objective = std::function<double(const Vector& x, Vector* grad)>;

GradCheckReport finite_diff_check(const Objective& f, const Vector& x, double h = 1e-5, double tolerance = 1e-4);

/// Store variant: `loss(true)` must zero nothing, fill `store` gradients and
/// return the loss; `loss(false)` only evaluates. `stride` > 1 checks every
/// stride-th coordinate of each parameter (always including the first).
GradCheckReport finite_diff_check(ParameterStore& store, const std::function<double(bool)>& loss, double h = 1e-5,
                                  double tolerance = 1e-4, Eigen::Index stride = 1);

}  // namespace rap::nn
