#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

#include "bertplm/encoder.hpp"
#include "bertplm/mask_plan.hpp"
#include "bertplm/posterior.hpp"

namespace bertplm::objective {

/// How per-target cross entropies of one plan are combined.
enum class PlmWeighting {
  Mean,  // divide by the number of targets
  Sum,
};

PlmWeighting parse_weighting(std::string_view text);
std::string_view to_string(PlmWeighting w);

struct LossBreakdown {
  double plm_loss = 0.0;
  std::optional<double> cls_loss;
  double total = 0.0;
  std::size_t k = 0;  // targets used; 0 means no masked-prediction term
};

struct LossGraph {
  ad::Var total;
  LossBreakdown breakdown;
};

/// Mean over rows of -sum_v target[v] * log softmax(logits)[v].
ad::Var soft_cross_entropy(const ad::Var& logits, const ad::Tensor& targets);
double soft_cross_entropy(const ad::Tensor& logits, const ad::Tensor& targets);
/// -sum p log p, with 0 log 0 = 0.
double entropy(std::span<const double> distribution);

/// Masked prediction of the original posterior rows at the plan's targets
/// from the encoder outputs at those positions. The plan needs >= 1 target.
LossGraph bert_plm_loss(const model::BoundEncoder& enc, const corpus::PhonemePosteriorSequence& seq,
                        const MaskPlan& plan, PlmWeighting weighting = PlmWeighting::Mean,
                        const model::ForwardOptions& opts = {});

/// cls_loss + lambda * plm_loss from a single forward pass. The classifier
/// pools over context positions (all positions if the plan has no context);
/// without targets the masked term is absent.
LossGraph finetune_loss(const model::BoundEncoder& enc, const corpus::LabeledUtterance& utt, const MaskPlan& plan,
                        double lambda, PlmWeighting weighting = PlmWeighting::Mean,
                        const model::ForwardOptions& opts = {});

}  // namespace bertplm::objective
