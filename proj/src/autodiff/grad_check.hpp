#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "autodiff/parameter.hpp"
#include "autodiff/tape.hpp"

namespace readtwice::ad {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  // 0 checks every element; otherwise an evenly spaced subset per parameter.
  std::size_t max_elements_per_param = 0;
};

struct ParamCheck {
  std::string path;
  std::size_t elements_checked = 0;
  double max_relative_error = 0.0;
  double max_abs_analytic = 0.0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_path;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::vector<ParamCheck> params;
};

// Builds a scalar on the given tape from the current parameter values.
using ScalarFn = std::function<Var(Tape&)>;

// Compares reverse-mode gradients of f with central finite differences for
// every parameter f binds. Rejects f if two evaluations at the same point
// disagree. Parameter values are restored on return; grads are overwritten.
GradCheckResult grad_check(const ScalarFn& f, const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor);

}  // namespace readtwice::ad
