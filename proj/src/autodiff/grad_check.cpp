#include "autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace readtwice::ad {

namespace {

double evaluate(const ScalarFn& f) {
  Tape tape;
  return f(tape).value().item();
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const ScalarFn& f, const GradCheckOptions& options) {
  std::vector<Parameter*> params;
  {
    Tape tape;
    Var loss = f(tape);
    if (loss.value().size() != 1) {
      fail(ErrorKind::kDimension, "grad_check needs a scalar function, got " +
                                      loss.value().shape_string());
    }
    params = tape.bound_parameters();
    for (Parameter* p : params) p->zero_grad();
    tape.backward(loss);
    const double again = evaluate(f);
    if (again != loss.value().item()) {
      fail(ErrorKind::kContract, "grad_check: function is not deterministic");
    }
  }

  GradCheckResult result;
  for (Parameter* p : params) {
    ParamCheck check;
    check.path = p->path;
    const std::vector<double> analytic = p->grad;
    const std::size_t n = p->value.size();
    std::size_t stride = 1;
    if (options.max_elements_per_param && n > options.max_elements_per_param) {
      stride = (n + options.max_elements_per_param - 1) / options.max_elements_per_param;
    }
    for (double a : analytic) check.max_abs_analytic = std::max(check.max_abs_analytic, std::abs(a));
    for (std::size_t i = 0; i < n; i += stride) {
      double& slot = p->value[i];
      const double saved = slot;
      slot = saved + options.epsilon;
      const double up = evaluate(f);
      slot = saved - options.epsilon;
      const double down = evaluate(f);
      slot = saved;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double err = relative_error(analytic[i], numeric, options.floor);
      ++check.elements_checked;
      check.max_relative_error = std::max(check.max_relative_error, err);
      if (result.worst_path.empty() || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_path = p->path;
        result.worst_index = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
    }
    result.params.push_back(std::move(check));
  }
  return result;
}

}  // namespace readtwice::ad
