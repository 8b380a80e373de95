#pragma once

#include <cstddef>
#include <cstdint>

#include "bertplm/encoder.hpp"
#include "bertplm/grad_check.hpp"
#include "bertplm/mask_plan.hpp"
#include "bertplm/objective.hpp"
#include "bertplm/oracle.hpp"

// Ready-made end-to-end checks shared by the CLI and the test suites.
namespace bertplm::diagnostics {

struct GradientCase {
  model::EncoderParams params;  // encoder with a classifier head, dropout off
  corpus::LabeledUtterance utterance;
  objective::MaskPlan plan;
};

/// Random tiny encoder (2 layers, width 64, 4 heads, dropout 0) with a
/// 3-class head, a random posterior sequence drawn from `seed`, and every
/// third frame (from frame 1) as a target. Needs length >= 2.
GradientCase make_gradient_case(std::size_t length, std::size_t vocab_size, std::uint64_t seed);

/// Finite-difference check of bert_plm_loss over every encoder array.
ad::GradCheckResult check_plm_gradients(const GradientCase& c, double eps = 1e-5,
                                        double floor = ad::kGradCheckFloor);
/// Finite-difference check of finetune_loss (lambda = 1) over every array,
/// head included.
ad::GradCheckResult check_finetune_gradients(const GradientCase& c, double eps = 1e-5,
                                             double floor = ad::kGradCheckFloor);

/// Random token sequence and a random conditional table per trial.
oracle::PredictorFactory random_predictor_factory(std::size_t vocab_size);
/// Fresh random encoder of the given shape and a random posterior sequence
/// per trial, wrapped by make_frozen_predictor.
oracle::PredictorFactory frozen_encoder_factory(const model::EncoderConfig& config);

}  // namespace bertplm::diagnostics
