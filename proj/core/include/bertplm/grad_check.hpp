#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bertplm/tape.hpp"

namespace bertplm::ad {

inline constexpr double kGradCheckFloor = 1e-8;

/// Builds a scalar on `tape` from leaves bound to the given parameter values.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;  // |g_ad - g_fd| over all entries
  std::size_t entries_checked = 0;
  // Location of the worst entry.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares tape gradients of `f` against central differences
/// (f(p+eps) - f(p-eps)) / (2 eps), entry by entry over every parameter.
/// Per-entry error is |g_ad - g_fd| / max(floor, |g_ad| + |g_fd|); the maximum
/// is returned. `f` must be deterministic. eps must lie in [1e-7, 1e-3].
///
/// The difference quotient carries roughly ulp(f) / eps of rounding noise
/// (about 1e-11 for f near 1 and eps = 1e-5), so entries whose true gradient
/// is below ~1e-7 cannot meet a 1e-4 relative bound under the default floor.
/// A larger floor turns the bound into an absolute one for such entries.
GradCheckResult finite_diff_check(const ScalarFn& f, std::span<const Tensor> params, double eps = 1e-5,
                                  double floor = kGradCheckFloor);

}  // namespace bertplm::ad
