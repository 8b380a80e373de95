#include "bertplm/optim.hpp"

#include <cmath>
#include <string>

namespace bertplm::train {

OptimState::OptimState(const model::ParamSet& params, AdamHyper hyper) : hyper_(hyper) { extend_to(params); }

OptimState::OptimState(const model::ParamSet& params, AdamHyper hyper, std::vector<ad::Tensor> m,
                       std::vector<ad::Tensor> v, std::uint64_t step)
    : hyper_(hyper), m_(std::move(m)), v_(std::move(v)), step_(step) {
  if (m_.size() != v_.size() || m_.size() > params.size()) {
    throw ShapeError("optimizer moments do not match the parameter list");
  }
  for (std::size_t i = 0; i < m_.size(); ++i) {
    if (m_[i].dims() != params[i].dims() || v_[i].dims() != params[i].dims()) {
      throw ShapeError("optimizer moments for '" + params.name(i) + "' have the wrong shape");
    }
  }
  extend_to(params);
}

void OptimState::extend_to(const model::ParamSet& params) {
  for (std::size_t i = m_.size(); i < params.size(); ++i) {
    m_.emplace_back(params[i].dims());
    v_.emplace_back(params[i].dims());
  }
}

void adam_step(model::ParamSet& params, std::span<const ad::Tensor> grads, OptimState& state) {
  if (grads.size() != params.size() || state.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters, " + std::to_string(grads.size()) +
                     " gradients, " + std::to_string(state.size()) + " moment pairs");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].dims() != params[i].dims()) {
      throw ShapeError("adam_step: gradient for '" + params.name(i) + "' is " + ad::to_string(grads[i].dims()) +
                       ", parameter is " + ad::to_string(params[i].dims()));
    }
    for (double g : grads[i].data()) {
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient for parameter '" + params.name(i) + "'");
    }
  }

  const AdamHyper& h = state.hyper_;
  const auto t = static_cast<double>(++state.step_);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    auto m = state.m_[i].mutable_data();
    auto v = state.v_[i].mutable_data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
      p[k] -= h.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + h.eps);
    }
  }
}

}  // namespace bertplm::train
