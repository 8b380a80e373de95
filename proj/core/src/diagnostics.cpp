#include "bertplm/diagnostics.hpp"

#include "bertplm/synth.hpp"

namespace bertplm::diagnostics {

GradientCase make_gradient_case(std::size_t length, std::size_t vocab_size, std::uint64_t seed) {
  const Rng root(seed);
  model::EncoderConfig cfg = model::EncoderConfig::tiny(vocab_size);
  cfg.dropout = 0.0;
  Rng init = root.split("init");
  auto params = model::EncoderParams::initialize(cfg, init);
  Rng head = root.split("head");
  params.add_classifier(3, head);

  Rng data = root.split("data");
  corpus::LabeledUtterance utt{corpus::random_posterior_sequence(length, vocab_size, 1.0, data), 1};
  // Every third frame is a target: several targets and a non-trivial mask.
  std::vector<std::size_t> targets;
  for (std::size_t t = 1; t < length; t += 3) targets.push_back(t);
  auto plan = objective::MaskPlan::from_targets(length, std::move(targets));
  return {std::move(params), std::move(utt), std::move(plan)};
}

namespace {

ad::GradCheckResult run_check(const GradientCase& c, bool finetune, double eps, double floor) {
  const auto f = [&c, finetune](ad::Tape&, std::span<const ad::Var> leaves) {
    const model::BoundEncoder enc(c.params, leaves);
    if (finetune) return objective::finetune_loss(enc, c.utterance, c.plan, 1.0).total;
    return objective::bert_plm_loss(enc, c.utterance.sequence, c.plan).total;
  };
  // Arrays the objective never reads (the head, for the masked loss) get zero
  // from both sides and contribute no error.
  return ad::finite_diff_check(f, c.params.params().values(), eps, floor);
}

}  // namespace

ad::GradCheckResult check_plm_gradients(const GradientCase& c, double eps, double floor) {
  return run_check(c, false, eps, floor);
}

ad::GradCheckResult check_finetune_gradients(const GradientCase& c, double eps, double floor) {
  return run_check(c, true, eps, floor);
}

oracle::PredictorFactory random_predictor_factory(std::size_t vocab_size) {
  return [vocab_size](std::size_t length, Rng& rng) { return oracle::random_set_predictor(length, vocab_size, rng); };
}

oracle::PredictorFactory frozen_encoder_factory(const model::EncoderConfig& config) {
  return [config](std::size_t length, Rng& rng) {
    Rng init = rng.split("init");
    const auto params = model::EncoderParams::initialize(config, init);
    Rng data = rng.split("data");
    const auto seq = corpus::random_posterior_sequence(length, config.vocab_size, 1.0, data);
    return oracle::make_frozen_predictor(params, seq);
  };
}

}  // namespace bertplm::diagnostics
