#include "bertplm/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace bertplm::ad {

namespace {

double evaluate(const ScalarFn& f, std::span<const Tensor> params) {
  Tape tape(/*record=*/false);
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.constant(p));
  const Var out = f(tape, leaves);
  if (out.size() != 1) throw ContractError("finite_diff_check: function must return a scalar");
  return out.value()[0];
}

}  // namespace

GradCheckResult finite_diff_check(const ScalarFn& f, std::span<const Tensor> params, double eps, double floor) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ContractError("finite_diff_check: eps outside [1e-7, 1e-3]");
  if (!(floor > 0.0)) throw ContractError("finite_diff_check: floor must be positive");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.parameter(p));
    const Var loss = f(tape, leaves);
    const Gradients grads = tape.backward(loss);
    for (const auto& v : leaves) analytic.push_back(grads[v]);
  }

  GradCheckResult result;
  std::vector<Tensor> work(params.begin(), params.end());
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double orig = params[p][i];
      work[p].mutable_data()[i] = orig + eps;
      const double up = evaluate(f, work);
      work[p].mutable_data()[i] = orig - eps;
      const double down = evaluate(f, work);
      work[p].mutable_data()[i] = orig;

      const double g_fd = (up - down) / (2.0 * eps);
      const double g_ad = analytic[p][i];
      const double abs_err = std::abs(g_ad - g_fd);
      const double err = abs_err / std::max(floor, std::abs(g_ad) + std::abs(g_fd));
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      if (err > result.max_rel_error || result.entries_checked == 0) {
        result.max_rel_error = err;
        result.worst_param = p;
        result.worst_index = i;
        result.worst_analytic = g_ad;
        result.worst_numeric = g_fd;
      }
      ++result.entries_checked;
    }
  }
  return result;
}

}  // namespace bertplm::ad
