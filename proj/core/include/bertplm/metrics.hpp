#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bertplm::train {

struct EvalMetrics {
  std::size_t count = 0;
  double error_rate = 0.0;
  double micro_f1 = 0.0;  // equals accuracy for single-label data
  double macro_f1 = 0.0;  // unweighted mean over all classes
  std::vector<double> per_class_f1;
  /// confusion[truth][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  /// Classes absent from the reference labels; they count as F1 = 0.
  std::vector<std::size_t> unsupported_classes;

  double accuracy() const { return 1.0 - error_rate; }
};

/// DataError when the inputs are empty, differ in length, or hold a class id
/// outside [0, num_classes).
EvalMetrics compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                            std::size_t num_classes);

}  // namespace bertplm::train
