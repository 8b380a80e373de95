#include "bertplm/tape.hpp"

#include <algorithm>
#include <utility>

namespace bertplm::ad {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("value() on an unbound Var");
  return tape_->value(id_);
}

std::span<double> GradSink::grad(std::size_t slot) { return tape_.grad_slot(inputs_[slot]); }

Tensor Gradients::operator[](const Var& v) const {
  if (v.id() >= dims_.size()) throw ContractError("gradient requested for a node from another tape");
  if (grads_[v.id()].empty()) return Tensor(dims_[v.id()]);
  return Tensor::unchecked(dims_[v.id()], grads_[v.id()]);
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{"parameter", std::move(value), {}, {}, record_});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

bool Tape::any_requires_grad(std::initializer_list<Var> vars) const {
  if (!record_) return false;
  return std::any_of(vars.begin(), vars.end(), [this](const Var& v) { return requires_grad(v); });
}

Var Tape::push(std::string_view kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  bool rg = false;
  if (record_) {
    for (auto id : inputs) rg = rg || nodes_[id].requires_grad;
  }
  if (!rg) {
    fn = nullptr;
    inputs.clear();
  }
  nodes_.push_back(Node{kind, std::move(value), std::move(inputs), std::move(fn), rg});
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_slot(std::size_t id) {
  if (!nodes_[id].requires_grad) return {};
  auto& g = grads_[id];
  if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
  return g;
}

Gradients Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (!record_) throw ContractError("backward: tape was created with record=false");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be a scalar, got dims " + to_string(loss.dims()));
  }
  grads_.assign(nodes_.size(), {});
  if (nodes_[loss.id()].requires_grad) grads_[loss.id()].assign(1, 1.0);

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (!node.backward || grads_[id].empty()) continue;
    GradSink sink(*this, node.inputs);
    // Inputs precede id, so filling their slots never touches grads_[id].
    node.backward(grads_[id], sink);
  }

  std::vector<Dims> dims;
  dims.reserve(nodes_.size());
  for (const auto& n : nodes_) dims.push_back(n.value.dims());
  return Gradients(std::exchange(grads_, {}), std::move(dims));
}

}  // namespace bertplm::ad
