#include "bertplm/objective.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace bertplm::objective {

using ad::Tensor;
using ad::Var;

PlmWeighting parse_weighting(std::string_view text) {
  if (text == "mean") return PlmWeighting::Mean;
  if (text == "sum") return PlmWeighting::Sum;
  throw ContractError("plm_weighting must be 'mean' or 'sum', got '" + std::string(text) + "'");
}

std::string_view to_string(PlmWeighting w) { return w == PlmWeighting::Mean ? "mean" : "sum"; }

Var soft_cross_entropy(const Var& logits, const Tensor& targets) {
  if (logits.dims() != targets.dims()) {
    throw ShapeError("soft_cross_entropy: logits " + ad::to_string(logits.dims()) + " vs targets " +
                     ad::to_string(targets.dims()));
  }
  ad::Tape& tape = *logits.tape();
  const Var t = tape.constant(targets);
  return ad::scale(ad::sum(ad::mul(t, ad::log_softmax(logits))), -1.0 / static_cast<double>(logits.rows()));
}

double soft_cross_entropy(const Tensor& logits, const Tensor& targets) {
  ad::Tape tape(false);
  return soft_cross_entropy(tape.constant(logits), targets).value().item();
}

double entropy(std::span<const double> distribution) {
  double h = 0.0;
  for (double p : distribution) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

namespace {

Tensor target_rows(const corpus::PhonemePosteriorSequence& seq, std::span<const std::size_t> idx) {
  const std::size_t V = seq.vocab_size();
  std::vector<double> rows;
  rows.reserve(idx.size() * V);
  for (auto t : idx) {
    const auto f = seq.frame(t);
    rows.insert(rows.end(), f.begin(), f.end());
  }
  return Tensor::unchecked({idx.size(), V}, std::move(rows));
}

Var masked_term(const model::BoundEncoder& enc, const Var& hidden, const corpus::PhonemePosteriorSequence& seq,
                const MaskPlan& plan, PlmWeighting weighting) {
  const auto& targets = plan.targets();
  const Var h = ad::gather_rows(hidden, targets);
  const Var logits = model::predict_phonemes(h, enc.var(enc.params().embedding()));
  Var ce = soft_cross_entropy(logits, target_rows(seq, targets));
  if (weighting == PlmWeighting::Sum) ce = ad::scale(ce, static_cast<double>(targets.size()));
  return ce;
}

}  // namespace

LossGraph bert_plm_loss(const model::BoundEncoder& enc, const corpus::PhonemePosteriorSequence& seq,
                        const MaskPlan& plan, PlmWeighting weighting, const model::ForwardOptions& opts) {
  if (plan.targets().empty()) throw ContractError("bert_plm_loss: mask plan has no targets");
  const Var hidden = model::encode(enc, seq, plan, opts);
  LossGraph g;
  g.total = masked_term(enc, hidden, seq, plan, weighting);
  g.breakdown.plm_loss = g.total.value().item();
  g.breakdown.total = g.breakdown.plm_loss;
  g.breakdown.k = plan.budget();
  return g;
}

LossGraph finetune_loss(const model::BoundEncoder& enc, const corpus::LabeledUtterance& utt, const MaskPlan& plan,
                        double lambda, PlmWeighting weighting, const model::ForwardOptions& opts) {
  const auto& p = enc.params();
  if (!p.has_classifier()) throw ContractError("finetune_loss: encoder has no classifier head");
  if (utt.label >= p.num_classes()) {
    throw DataError("label " + std::to_string(utt.label) + " outside classifier head of " +
                    std::to_string(p.num_classes()) + " classes");
  }
  const Var hidden = model::encode(enc, utt.sequence, plan, opts);
  // A plan that masks every frame leaves no context; pool over all rows then.
  std::vector<std::size_t> all;
  if (plan.context().empty()) {
    all.resize(plan.length());
    for (std::size_t t = 0; t < all.size(); ++t) all[t] = t;
  }
  const Var logits = model::classify(enc, hidden, plan.context().empty() ? all : plan.context());
  const Var cls = ad::scale(ad::gather(ad::log_softmax(logits), {}, {utt.label}), -1.0);

  LossGraph g;
  g.breakdown.cls_loss = cls.value().item();
  g.breakdown.k = plan.budget();
  g.total = cls;
  if (plan.budget() > 0) {
    const Var plm = masked_term(enc, hidden, utt.sequence, plan, weighting);
    g.breakdown.plm_loss = plm.value().item();
    if (lambda != 0.0) g.total = ad::add(cls, ad::scale(plm, lambda));
  }
  g.breakdown.total = g.total.value().item();
  return g;
}

}  // namespace bertplm::objective
