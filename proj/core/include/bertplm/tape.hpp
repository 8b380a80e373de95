#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "bertplm/tensor.hpp"

namespace bertplm::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Dims& dims() const { return value().dims(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Per-input gradient accumulators handed to a node's backward function.
/// grad(i) is empty when input i does not require a gradient.
class GradSink {
 public:
  GradSink(Tape& tape, std::span<const std::size_t> inputs) : tape_(tape), inputs_(inputs) {}
  std::span<double> grad(std::size_t slot);

 private:
  Tape& tape_;
  std::span<const std::size_t> inputs_;
};

using BackwardFn = std::function<void(std::span<const double> out_grad, GradSink& sink)>;

/// Result of Tape::backward: gradients keyed by node id.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<std::vector<double>> grads, std::vector<Dims> dims)
      : grads_(std::move(grads)), dims_(std::move(dims)) {}

  bool has(const Var& v) const { return v.id() < grads_.size() && !grads_[v.id()].empty(); }
  /// Gradient w.r.t. v; zeros when the loss does not depend on v.
  Tensor operator[](const Var& v) const;

 private:
  std::vector<std::vector<double>> grads_;
  std::vector<Dims> dims_;
};

/// Linear record of operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so inputs always precede their
/// consumers and the reverse sweep visits each node exactly once. A tape
/// constructed with record=false keeps forward values only.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var parameter(Tensor value);
  /// Leaf excluded from differentiation.
  Var constant(Tensor value);

  /// Appends an op node. `fn` may be empty when no input requires a gradient.
  Var push(std::string_view kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  bool recording() const { return record_; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  bool any_requires_grad(std::initializer_list<Var> vars) const;
  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  std::string_view kind(std::size_t id) const { return nodes_[id].kind; }

  /// Reverse sweep from a scalar loss. Throws ContractError on a non-scalar
  /// loss or a non-recording tape.
  Gradients backward(const Var& loss);

 private:
  friend class GradSink;

  struct Node {
    std::string_view kind;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::span<double> grad_slot(std::size_t id);

  bool record_;
  std::deque<Node> nodes_;  // deque: Var::value() references survive later pushes
  std::vector<std::vector<double>> grads_;  // live only during backward()
};

}  // namespace bertplm::ad
