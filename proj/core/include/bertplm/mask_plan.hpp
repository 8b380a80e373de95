#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bertplm/errors.hpp"
#include "bertplm/posterior.hpp"
#include "bertplm/rng.hpp"

namespace bertplm::objective {

inline constexpr double kDefaultMaskRatioMax = 0.15;

/// Partition of [0, T) into context frames (visible) and target frames
/// (replaced by the mask vector and predicted).
class MaskPlan {
 public:
  /// Checks that the two sets partition [0, length); ContractError otherwise.
  MaskPlan(std::size_t length, std::vector<std::size_t> context, std::vector<std::size_t> targets,
           std::size_t eligible = 0);
  /// Targets as given, context is the complement.
  static MaskPlan from_targets(std::size_t length, std::vector<std::size_t> targets, std::size_t eligible = 0);
  /// All frames are context.
  static MaskPlan all_context(std::size_t length);

  std::size_t length() const { return length_; }
  const std::vector<std::size_t>& context() const { return context_; }
  const std::vector<std::size_t>& targets() const { return targets_; }
  std::size_t budget() const { return targets_.size(); }
  /// Non-major-SIL frame count the plan was sampled from (0 if built by hand).
  std::size_t eligible() const { return eligible_; }
  bool is_target(std::size_t i) const { return is_target_[i] != 0; }

 private:
  std::size_t length_;
  std::vector<std::size_t> context_;
  std::vector<std::size_t> targets_;
  std::size_t eligible_;
  std::vector<std::uint8_t> is_target_;
};

/// No frame of the sequence may serve as a target.
class SamplingError : public DataError {
 public:
  using DataError::DataError;
};

/// max(1, floor(rho_max * eligible)).
std::size_t budget_max(double rho_max, std::size_t eligible);

/// Draws k uniformly from {1..budget_max}, then a uniform k-subset of the
/// non-major-SIL frames as targets. Major-SIL frames always stay context.
MaskPlan sample_mask_plan(const corpus::PhonemePosteriorSequence& seq, std::size_t sil_index, double rho_max,
                          double tau, Rng& rng);

}  // namespace bertplm::objective
