#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "bertplm/encoder.hpp"

namespace bertplm::train {

/// A gradient entry was NaN or infinite; the message names the parameter.
class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamHyper {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moments, one pair per parameter array in ParamSet order.
class OptimState {
 public:
  OptimState() = default;
  /// Zero moments shaped like `params`.
  OptimState(const model::ParamSet& params, AdamHyper hyper);
  /// Adopts existing moments (e.g. from a checkpoint); ShapeError on mismatch.
  OptimState(const model::ParamSet& params, AdamHyper hyper, std::vector<ad::Tensor> m, std::vector<ad::Tensor> v,
             std::uint64_t step);

  const AdamHyper& hyper() const { return hyper_; }
  void set_hyper(AdamHyper hyper) { hyper_ = hyper; }
  std::uint64_t step() const { return step_; }
  std::size_t size() const { return m_.size(); }
  const ad::Tensor& m(std::size_t i) const { return m_[i]; }
  const ad::Tensor& v(std::size_t i) const { return v_[i]; }

  /// Grows the moment lists when parameters were appended (e.g. a new head).
  void extend_to(const model::ParamSet& params);

 private:
  friend void adam_step(model::ParamSet&, std::span<const ad::Tensor>, OptimState&);

  AdamHyper hyper_;
  std::vector<ad::Tensor> m_, v_;
  std::uint64_t step_ = 0;
};

/// One bias-corrected Adam update of every array in `params`.
/// ShapeError when grads do not match; NonFiniteGradient on NaN/Inf.
void adam_step(model::ParamSet& params, std::span<const ad::Tensor> grads, OptimState& state);

}  // namespace bertplm::train
