#include "bertplm/metrics.hpp"

#include <string>

#include "bertplm/errors.hpp"

namespace bertplm::train {

EvalMetrics compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                            std::size_t num_classes) {
  if (truth.empty()) throw DataError("metrics are undefined for an empty evaluation set");
  if (truth.size() != predicted.size()) throw DataError("truth and prediction counts differ");
  if (num_classes == 0) throw DataError("metrics need at least one class");

  EvalMetrics m;
  m.count = truth.size();
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= num_classes || predicted[i] >= num_classes) {
      throw DataError("class id outside [0, " + std::to_string(num_classes) + ") at item " + std::to_string(i));
    }
    ++m.confusion[truth[i]][predicted[i]];
    if (truth[i] == predicted[i]) ++correct;
  }
  const double n = static_cast<double>(truth.size());
  m.micro_f1 = static_cast<double>(correct) / n;
  m.error_rate = 1.0 - m.micro_f1;

  m.per_class_f1.assign(num_classes, 0.0);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t support = 0, predicted_c = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      support += m.confusion[c][k];
      predicted_c += m.confusion[k][c];
    }
    if (support == 0) m.unsupported_classes.push_back(c);
    const std::size_t tp = m.confusion[c][c];
    if (tp > 0) {
      // 2PR/(P+R) with P = tp/predicted, R = tp/support.
      m.per_class_f1[c] = 2.0 * static_cast<double>(tp) / static_cast<double>(support + predicted_c);
    }
    f1_sum += m.per_class_f1[c];
  }
  m.macro_f1 = f1_sum / static_cast<double>(num_classes);
  return m;
}

}  // namespace bertplm::train
