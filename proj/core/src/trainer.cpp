#include "bertplm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>

#include "bertplm/mask_plan.hpp"
#include "bertplm/objective.hpp"
#include "bertplm/optim.hpp"

namespace bertplm::train {

using corpus::LabeledUtterance;
using corpus::PhonemePosteriorSequence;
using model::EncoderParams;
using objective::MaskPlan;

namespace {

void log_line(const TrainIo& io, std::uint64_t step, std::string_view split, std::string_view metric, double value) {
  if (!io.log) return;
  *io.log << step << '\t' << split << '\t' << metric << '\t' << std::setprecision(8) << value << '\n';
}

/// Sums per-parameter gradients over the utterances of one batch.
class GradAccumulator {
 public:
  explicit GradAccumulator(const model::ParamSet& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      dims_.push_back(params[i].dims());
      sums_.emplace_back(params[i].size(), 0.0);
    }
  }

  void add(const ad::Gradients& grads, std::span<const ad::Var> leaves) {
    for (std::size_t i = 0; i < sums_.size(); ++i) {
      if (!grads.has(leaves[i])) continue;
      const ad::Tensor g = grads[leaves[i]];
      const auto d = g.data();
      for (std::size_t k = 0; k < d.size(); ++k) sums_[i][k] += d[k];
    }
  }

  std::vector<ad::Tensor> mean(std::size_t count) const {
    std::vector<ad::Tensor> out;
    out.reserve(sums_.size());
    const double w = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < sums_.size(); ++i) {
      std::vector<double> v = sums_[i];
      for (double& x : v) x *= w;
      out.push_back(ad::Tensor::unchecked(dims_[i], std::move(v)));
    }
    return out;
  }

 private:
  std::vector<ad::Dims> dims_;
  std::vector<std::vector<double>> sums_;
};

std::size_t common_vocab(std::span<const PhonemePosteriorSequence> seqs) {
  if (seqs.empty()) throw DataError("corpus is empty");
  const std::size_t V = seqs.front().vocab_size();
  for (const auto& s : seqs) {
    if (s.vocab_size() != V) throw DataError("utterance " + s.utterance_id + " has a different vocabulary size");
  }
  return V;
}

template <typename T>
void shuffle_with(std::vector<T>& items, Rng rng) {
  std::shuffle(items.begin(), items.end(), rng);
}

std::vector<LabeledUtterance> subset(std::span<const LabeledUtterance> data, std::span<const std::size_t> idx) {
  std::vector<LabeledUtterance> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data[i]);
  return out;
}

void save_if_requested(const TrainIo& io, const Checkpoint& ckpt) {
  if (io.checkpoint_path) save_checkpoint(*io.checkpoint_path, ckpt);
}

}  // namespace

std::optional<double> PretrainResult::initial_holdout_loss() const {
  if (holdout_curve.empty()) return std::nullopt;
  return holdout_curve.front().second;
}

std::optional<double> PretrainResult::final_holdout_loss() const {
  if (holdout_curve.empty()) return std::nullopt;
  return holdout_curve.back().second;
}

double masked_loss(const EncoderParams& params, std::span<const PhonemePosteriorSequence> corpus,
                   std::span<const MaskPlan> plans, objective::PlmWeighting weighting) {
  if (corpus.size() != plans.size()) throw ContractError("masked_loss: one plan per utterance is required");
  if (corpus.empty()) throw DataError("masked_loss: no utterances");
  double total = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    ad::Tape tape(false);
    const model::BoundEncoder enc(tape, params);
    total += objective::bert_plm_loss(enc, corpus[i], plans[i], weighting).breakdown.plm_loss;
  }
  return total / static_cast<double>(corpus.size());
}

PretrainResult pretrain(std::span<const PhonemePosteriorSequence> corpus, std::size_t sil_index,
                        const config::Config& cfg, std::uint64_t seed, const TrainIo& io) {
  cfg.validate();
  const std::size_t V = common_vocab(corpus);
  const Rng root(seed);
  PretrainResult result;

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus::count_eligible(corpus[i], sil_index, cfg.sil_threshold) > 0) {
      usable.push_back(i);
    } else {
      ++result.skipped;
    }
  }
  if (usable.empty()) {
    throw DataError("every utterance is major-SIL throughout; nothing can be masked (check sil_threshold)");
  }

  shuffle_with(usable, root.split("holdout"));
  std::size_t n_hold = 0;
  if (usable.size() >= 2 && cfg.holdout_fraction > 0.0) {
    n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(usable.size())));
  }
  std::vector<std::size_t> holdout(usable.begin(), usable.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> train(usable.begin() + static_cast<std::ptrdiff_t>(n_hold), usable.end());
  std::sort(holdout.begin(), holdout.end());
  std::sort(train.begin(), train.end());
  result.train_size = train.size();
  result.holdout_size = holdout.size();

  std::vector<PhonemePosteriorSequence> holdout_seqs;
  std::vector<MaskPlan> holdout_plans;
  for (auto i : holdout) {
    Rng r = root.split("holdout-plan", i);
    holdout_seqs.push_back(corpus[i]);
    holdout_plans.push_back(objective::sample_mask_plan(corpus[i], sil_index, cfg.mask_ratio_max, cfg.sil_threshold, r));
  }

  Rng init_rng = root.split("init");
  EncoderParams params = EncoderParams::initialize(cfg.encoder(V), init_rng);
  OptimState opt(params.params(), cfg.adam());

  std::uint64_t step = 0;
  auto eval = [&] {
    if (holdout.empty()) return;
    const double loss = masked_loss(params, holdout_seqs, holdout_plans, cfg.plm_weighting);
    result.holdout_curve.emplace_back(step, loss);
    log_line(io, step, "holdout", "plm_loss", loss);
  };
  eval();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train;
    shuffle_with(order, root.split("epoch", epoch));
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      GradAccumulator acc(params.params());
      double loss_sum = 0.0;
      for (std::size_t n = b; n < e; ++n) {
        const std::size_t idx = order[n];
        Rng plan_rng = root.split("plan", step).split(idx);
        const MaskPlan plan =
            objective::sample_mask_plan(corpus[idx], sil_index, cfg.mask_ratio_max, cfg.sil_threshold, plan_rng);
        ad::Tape tape;
        const model::BoundEncoder enc(tape, params);
        const model::ForwardOptions opts{true, root.split("dropout", step).split(idx).key()};
        const auto loss = objective::bert_plm_loss(enc, corpus[idx], plan, cfg.plm_weighting, opts);
        acc.add(tape.backward(loss.total), enc.vars());
        loss_sum += loss.breakdown.plm_loss;
      }
      adam_step(params.params(), acc.mean(e - b), opt);
      ++step;
      log_line(io, step, "train", "plm_loss", loss_sum / static_cast<double>(e - b));
      if (cfg.eval_every > 0 && step % cfg.eval_every == 0) eval();
    }
    if (cfg.eval_every == 0) eval();
    save_if_requested(io, make_checkpoint(params, &opt, cfg, step));
  }
  if (cfg.eval_every > 0 && (result.holdout_curve.empty() || result.holdout_curve.back().first != step)) eval();

  result.checkpoint = make_checkpoint(params, &opt, cfg, step);
  return result;
}

DataSplit split_labeled(std::span<const LabeledUtterance> data, std::size_t num_classes, const config::Config& cfg,
                        std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].label >= num_classes) {
      throw DataError("utterance " + data[i].sequence.utterance_id + " has class " + std::to_string(data[i].label) +
                      " but only " + std::to_string(num_classes) + " classes exist");
    }
    by_class[data[i].label].push_back(i);
  }
  const Rng root = Rng(seed).split("split");
  DataSplit s;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& items = by_class[c];
    if (items.empty()) continue;
    shuffle_with(items, root.split(c));
    const auto n = static_cast<double>(items.size());
    const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * n));
    const auto n_valid =
        static_cast<std::size_t>(std::llround(cfg.valid_fraction * static_cast<double>(items.size() - n_test)));
    const std::size_t n_train_all = items.size() - n_test - n_valid;
    std::size_t n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n_train_all)));
    if (n_train_all > 0) n_train = std::max<std::size_t>(1, n_train);
    s.test.insert(s.test.end(), items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.valid.insert(s.valid.end(), items.begin() + static_cast<std::ptrdiff_t>(n_test),
                   items.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid));
    const auto train_begin = items.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid);
    s.train.insert(s.train.end(), train_begin, train_begin + static_cast<std::ptrdiff_t>(n_train));
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.valid.begin(), s.valid.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::size_t predict(const EncoderParams& params, const PhonemePosteriorSequence& seq) {
  ad::Tape tape(false);
  const model::BoundEncoder enc(tape, params);
  const MaskPlan plan = MaskPlan::all_context(seq.length());
  const ad::Var hidden = model::encode(enc, seq, plan);
  const ad::Tensor logits = model::classify(enc, hidden, plan.context()).value();
  const auto d = logits.data();
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

EvalMetrics evaluate(const EncoderParams& params, std::span<const LabeledUtterance> data) {
  if (!params.has_classifier()) throw ContractError("evaluate: checkpoint has no classifier head");
  if (data.empty()) throw DataError("evaluation set is empty; metrics are undefined");
  std::vector<std::size_t> truth, pred;
  for (const auto& u : data) {
    truth.push_back(u.label);
    pred.push_back(predict(params, u.sequence));
  }
  return compute_metrics(truth, pred, params.num_classes());
}

FinetuneResult finetune(const std::optional<EncoderParams>& init, std::span<const LabeledUtterance> data,
                        std::size_t num_classes, std::size_t sil_index, const config::Config& cfg, std::uint64_t seed,
                        const TrainIo& io) {
  cfg.validate();
  if (data.empty()) throw DataError("labeled corpus is empty");
  if (num_classes < 2) throw DataError("fine-tuning needs at least two classes");
  std::size_t V = data.front().sequence.vocab_size();
  for (const auto& u : data) {
    if (u.sequence.vocab_size() != V) throw DataError("utterance " + u.sequence.utterance_id + " has a different vocabulary size");
  }
  const Rng root(seed);
  FinetuneResult result;
  result.split = split_labeled(data, num_classes, cfg, seed);
  if (result.split.train.empty()) throw DataError("training split is empty");

  EncoderParams params = [&] {
    if (init) return *init;
    Rng r = root.split("init");
    return EncoderParams::initialize(cfg.encoder(V), r);
  }();
  if (params.config().vocab_size != V) {
    throw DataError("encoder vocabulary size " + std::to_string(params.config().vocab_size) +
                    " differs from the corpus (" + std::to_string(V) + ")");
  }
  Rng head_rng = root.split("head");
  params.add_classifier(num_classes, head_rng);
  OptimState opt(params.params(), cfg.adam());

  const auto train = subset(data, result.split.train);
  const auto valid = subset(data, result.split.valid);
  const auto test = subset(data, result.split.test);
  // Without a validation split the stopping rule watches training error.
  const auto& watch = valid.empty() ? train : valid;
  const std::string_view watch_name = valid.empty() ? "train" : "valid";

  EncoderParams best = params;
  double best_error = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_with(order, root.split("epoch", epoch));
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      GradAccumulator acc(params.params());
      double loss_sum = 0.0;
      for (std::size_t n = b; n < e; ++n) {
        const auto& utt = train[order[n]];
        MaskPlan plan = MaskPlan::all_context(utt.sequence.length());
        if (cfg.finetune_lambda != 0.0 &&
            corpus::count_eligible(utt.sequence, sil_index, cfg.sil_threshold) > 0) {
          Rng plan_rng = root.split("plan", step).split(order[n]);
          plan = objective::sample_mask_plan(utt.sequence, sil_index, cfg.mask_ratio_max, cfg.sil_threshold,
                                             plan_rng);
        }
        ad::Tape tape;
        const model::BoundEncoder enc(tape, params);
        const model::ForwardOptions opts{true, root.split("dropout", step).split(order[n]).key()};
        const auto loss =
            objective::finetune_loss(enc, utt, plan, cfg.finetune_lambda, cfg.plm_weighting, opts);
        acc.add(tape.backward(loss.total), enc.vars());
        loss_sum += loss.breakdown.total;
      }
      adam_step(params.params(), acc.mean(e - b), opt);
      ++step;
      log_line(io, step, "train", "loss", loss_sum / static_cast<double>(e - b));
    }
    ++result.epochs_run;
    const double err = evaluate(params, watch).error_rate;
    log_line(io, step, watch_name, "error_rate", err);
    if (err < best_error) {
      best_error = err;
      best = params;
      result.best_epoch = epoch + 1;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
    save_if_requested(io, make_checkpoint(best, nullptr, cfg, step));
  }

  result.checkpoint = make_checkpoint(best, nullptr, cfg, step);
  if (!valid.empty()) result.valid = evaluate(best, valid);
  if (!test.empty()) {
    result.test = evaluate(best, test);
    log_line(io, step, "test", "error_rate", result.test->error_rate);
  }
  return result;
}

namespace {

const EvalMetrics& require_test(const FinetuneResult& r) {
  if (!r.test) throw DataError("test split is empty; raise test_fraction or the corpus size");
  return *r.test;
}

void pick_best(AblationTable& t) {
  for (std::size_t i = 1; i < t.rows.size(); ++i) {
    if (t.rows[i].pretrained.error_rate < t.rows[t.best_row].pretrained.error_rate) t.best_row = i;
  }
}

TrainIo without_checkpoint(const TrainIo& io) { return {io.log, std::nullopt}; }

}  // namespace

AblationTable ablate_mask_ratio(std::span<const PhonemePosteriorSequence> unlabeled,
                                std::span<const LabeledUtterance> labeled, std::size_t num_classes,
                                std::size_t sil_index, std::span<const double> ratios, const config::Config& cfg,
                                std::uint64_t seed, const TrainIo& io) {
  if (ratios.empty()) throw ContractError("ablate_mask_ratio: no ratios given");
  AblationTable table;
  table.parameter = "mask_ratio";
  const TrainIo quiet = without_checkpoint(io);
  for (double r : ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ContractError("mask ratios must lie in (0, 1]");
    config::Config c = cfg;
    c.mask_ratio_max = r;
    const auto pre = pretrain(unlabeled, sil_index, c, seed, quiet);
    const auto ft = finetune(pre.checkpoint.encoder(), labeled, num_classes, sil_index, c, seed, quiet);
    table.rows.push_back({r, pre.final_holdout_loss(), require_test(ft), std::nullopt});
  }
  pick_best(table);
  return table;
}

AblationTable ablate_fraction(std::span<const PhonemePosteriorSequence> unlabeled,
                              std::span<const LabeledUtterance> labeled, std::size_t num_classes,
                              std::size_t sil_index, std::span<const double> fractions, const config::Config& cfg,
                              std::uint64_t seed, const TrainIo& io) {
  if (fractions.empty()) throw ContractError("ablate_fraction: no fractions given");
  AblationTable table;
  table.parameter = "train_fraction";
  const TrainIo quiet = without_checkpoint(io);
  const auto pre = pretrain(unlabeled, sil_index, cfg, seed, quiet);
  const EncoderParams encoder = pre.checkpoint.encoder();
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ContractError("data fractions must lie in (0, 1]");
    config::Config c = cfg;
    c.train_fraction = f;
    const auto with_pre = finetune(encoder, labeled, num_classes, sil_index, c, seed, quiet);
    const auto fresh = finetune(std::nullopt, labeled, num_classes, sil_index, c, seed, quiet);
    table.rows.push_back({f, pre.final_holdout_loss(), require_test(with_pre), require_test(fresh)});
  }
  pick_best(table);
  return table;
}

void write_table(std::ostream& out, const AblationTable& table) {
  const bool paired = !table.rows.empty() && table.rows.front().fresh.has_value();
  out << table.parameter << "\terror_rate\tmacro_f1\tmicro_f1";
  if (paired) out << "\tfresh_error_rate\tgain";
  out << "\theldout_plm_loss\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : table.rows) {
    out << r.value << '\t' << r.pretrained.error_rate << '\t' << r.pretrained.macro_f1 << '\t' << r.pretrained.micro_f1;
    if (paired) out << '\t' << r.fresh->error_rate << '\t' << (r.fresh->error_rate - r.pretrained.error_rate);
    out << '\t';
    if (r.holdout_loss) {
      out << *r.holdout_loss;
    } else {
      out << "nan";
    }
    out << '\n';
  }
  if (!table.rows.empty()) out << "best\t" << table.rows[table.best_row].value << '\n';
  out << std::defaultfloat;
}

}  // namespace bertplm::train
