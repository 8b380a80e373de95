#include "bertplm/mask_plan.hpp"

#include <algorithm>
#include <cmath>

namespace bertplm::objective {

MaskPlan::MaskPlan(std::size_t length, std::vector<std::size_t> context, std::vector<std::size_t> targets,
                   std::size_t eligible)
    : length_(length),
      context_(std::move(context)),
      targets_(std::move(targets)),
      eligible_(eligible),
      is_target_(length, 0) {
  std::sort(context_.begin(), context_.end());
  std::sort(targets_.begin(), targets_.end());
  std::vector<std::uint8_t> seen(length, 0);
  auto mark = [&](const std::vector<std::size_t>& set, bool target) {
    for (auto i : set) {
      if (i >= length) throw ContractError("mask plan index " + std::to_string(i) + " outside [0, T)");
      if (seen[i]) throw ContractError("mask plan index " + std::to_string(i) + " appears twice");
      seen[i] = 1;
      if (target) is_target_[i] = 1;
    }
  };
  mark(context_, false);
  mark(targets_, true);
  if (context_.size() + targets_.size() != length) throw ContractError("mask plan does not cover [0, T)");
}

MaskPlan MaskPlan::from_targets(std::size_t length, std::vector<std::size_t> targets, std::size_t eligible) {
  std::vector<std::uint8_t> is_t(length, 0);
  for (auto i : targets) {
    if (i >= length) throw ContractError("mask plan target " + std::to_string(i) + " outside [0, T)");
    is_t[i] = 1;
  }
  std::vector<std::size_t> context;
  for (std::size_t i = 0; i < length; ++i) {
    if (!is_t[i]) context.push_back(i);
  }
  return MaskPlan(length, std::move(context), std::move(targets), eligible);
}

MaskPlan MaskPlan::all_context(std::size_t length) { return from_targets(length, {}); }

std::size_t budget_max(double rho_max, std::size_t eligible) {
  // The epsilon keeps products such as 0.29 * 100 from flooring to 28.
  const double raw = std::floor(rho_max * static_cast<double>(eligible) + 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(raw));
}

MaskPlan sample_mask_plan(const corpus::PhonemePosteriorSequence& seq, std::size_t sil_index, double rho_max,
                          double tau, Rng& rng) {
  if (!(rho_max > 0.0 && rho_max <= 1.0)) throw ContractError("mask ratio must lie in (0, 1]");
  std::vector<std::size_t> eligible;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    if (!corpus::is_major_sil(seq.frame(t), sil_index, tau)) eligible.push_back(t);
  }
  if (eligible.empty()) throw SamplingError("utterance " + seq.utterance_id + " has no non-SIL frame to mask");

  const std::size_t k = 1 + rng.index(budget_max(rho_max, eligible.size()));
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  std::vector<std::size_t> pool = eligible;
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
  pool.resize(k);
  return MaskPlan::from_targets(seq.length(), std::move(pool), eligible.size());
}

}  // namespace bertplm::objective
