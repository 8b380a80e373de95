// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "bertplm/checkpoint.hpp"
#include "bertplm/corpus_io.hpp"
#include "bertplm/diagnostics.hpp"
#include "bertplm/encoder.hpp"
#include "bertplm/mask_plan.hpp"
#include "bertplm/oracle.hpp"
#include "bertplm/synth.hpp"
#include "bertplm/trainer.hpp"

using namespace bertplm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

config::Config tiny_run_config() {
  config::Config c;
  c.layers = 2;
  c.d_model = 64;
  c.d_ff = 128;
  c.heads = 4;
  c.lr = 1e-3;
  return c;
}

std::vector<corpus::PhonemePosteriorSequence> sequences(const std::vector<corpus::LabeledUtterance>& data) {
  std::vector<corpus::PhonemePosteriorSequence> out;
  out.reserve(data.size());
  for (const auto& u : data) out.push_back(u.sequence);
  return out;
}

double p_value(const std::vector<double>& observed, const std::vector<double>& expected) {
  double chi = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    chi += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  }
  const boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, chi));
}

Outcome theorem_oracle() {
  model::EncoderConfig frozen = model::EncoderConfig::tiny(8);
  frozen.dropout = 0.0;
  const std::vector<std::pair<std::string, oracle::PredictorFactory>> factories = {
      {"random", diagnostics::random_predictor_factory(8)},
      {"encoder", diagnostics::frozen_encoder_factory(frozen)},
  };
  double worst = 0.0;
  std::size_t runs = 0;
  for (const auto& [name, factory] : factories) {
    for (std::size_t T = 2; T <= 5; ++T) {
      for (std::size_t c = 1; c < T; ++c) {
        const Rng rng = Rng(2024).split(name).split(T * 16 + c);
        for (const auto& r : oracle::verify_theorem(factory, T, c, 20, rng)) {
          worst = std::max(worst, r.dev_exact);
          ++runs;
        }
      }
    }
  }
  const auto u = oracle::compare(oracle::uniform_predictor(3, 4), 1);
  const double log4 = std::log(4.0);
  const double lhs_err = std::abs(u.lhs + 2.0 * log4), sum_form_err = std::abs(u.rhs_sum_form + 1.5 * log4);
  const bool pass = worst <= 1e-9 && lhs_err <= 1e-12 && sum_form_err <= 1e-12;
  return {pass, fmt("%zu trials, max |LHS - RHS_exact| = %.3e; uniform T=3 c=1 V=4: LHS = %.12f, RHS_sum_form = %.12f",
                    runs, worst, u.lhs, u.rhs_sum_form)};
}

Outcome gradient_fidelity() {
  const auto c = diagnostics::make_gradient_case(12, 8, 1);
  const auto plm = diagnostics::check_plm_gradients(c);
  const auto ft = diagnostics::check_finetune_gradients(c);
  const double worst = std::max(plm.max_rel_error, ft.max_rel_error);
  const auto& names = c.params.params();
  return {worst <= 1e-4,
          fmt("max rel error plm %.3e (worst %s, ad %.3e fd %.3e), finetune %.3e; max abs error plm %.3e, "
              "finetune %.3e over %zu entries each",
              plm.max_rel_error, names.name(plm.worst_param).c_str(), plm.worst_analytic, plm.worst_numeric,
              ft.max_rel_error, plm.max_abs_error, ft.max_abs_error, plm.entries_checked)};
}

Outcome no_leakage() {
  const Rng root(31337);
  double worst_output = 0.0, worst_mass = 0.0;
  std::size_t perturbations = 0;
  for (std::size_t trial = 0; trial < 100; ++trial) {
    Rng rng = root.split(trial);
    const std::size_t V = 3 + rng.index(8), T = 2 + rng.index(24);
    model::EncoderConfig cfg = model::EncoderConfig::tiny(V);
    cfg.dropout = 0.0;
    cfg.init_std = 0.02 + 0.3 * rng.uniform();
    const auto params = model::EncoderParams::initialize(cfg, rng);
    const auto seq = corpus::random_posterior_sequence(T, V, 0.5 + rng.uniform(), rng);
    const auto plan = objective::sample_mask_plan(seq, 0, 0.5, 1.0 - 1e-12, rng);

    ad::Tape tape(false);
    const model::BoundEncoder enc(tape, params);
    model::EncoderTrace trace;
    const ad::Tensor base = model::encode(enc, seq, plan, {}, &trace).value();
    for (const auto& layer : trace.layers) {
      for (const auto& w : layer.weights) {
        for (std::size_t i = 0; i < T; ++i) {
          for (auto j : plan.targets()) {
            if (i != j) worst_mass = std::max(worst_mass, std::abs(w.at(i, j)));
          }
        }
      }
    }
    for (auto t : plan.targets()) {
      auto perturbed = seq;
      const auto other = corpus::random_posterior_sequence(1, V, 1.0, rng);
      auto d = perturbed.frames.mutable_data();
      for (std::size_t v = 0; v < V; ++v) d[t * V + v] = other.frames.at(0, v);
      worst_output = std::max(worst_output, ad::max_abs_diff(base, model::encode(enc, perturbed, plan).value()));
      ++perturbations;
    }
  }
  return {worst_output <= 1e-12 && worst_mass == 0.0,
          fmt("100 triples, %zu target perturbations: max output change %.3e, max blocked attention mass %.3e",
              perturbations, worst_output, worst_mass)};
}

Outcome mask_law() {
  const std::size_t T = 8, draws = 100000;
  std::vector<double> rows(T * 2, 0.0);
  for (std::size_t t = 0; t < T; ++t) rows[t * 2 + 1] = 1.0;
  const corpus::PhonemePosteriorSequence seq{"no-sil", ad::Tensor({T, 2}, rows)};
  Rng rng(99);
  std::vector<double> k_counts(4, 0.0), pos_counts(T, 0.0);
  for (std::size_t i = 0; i < draws; ++i) {
    const auto plan = objective::sample_mask_plan(seq, 0, 0.5, 0.5, rng);
    k_counts[plan.budget() - 1] += 1.0;
    for (auto t : plan.targets()) pos_counts[t] += 1.0;
  }
  const double pk = p_value(k_counts, std::vector<double>(4, draws / 4.0));
  // Each position is a target with probability E[k] / T = 2.5 / 8 per plan.
  const double p = 2.5 / static_cast<double>(T), mean = p * draws, sigma = std::sqrt(draws * p * (1.0 - p));
  double worst_z = 0.0;
  for (double n : pos_counts) worst_z = std::max(worst_z, std::abs(n - mean) / sigma);

  const auto g = corpus::default_grammar();
  const std::size_t sil = g.vocab.sil_index();
  const Rng root(7);
  std::size_t frames = 0, major_sil_frames = 0, sil_targets = 0, plans = 0;
  for (std::size_t i = 0; frames < 1000000; ++i) {
    Rng r = root.split(i);
    const auto u = corpus::generate_utterance(g, i % g.num_classes(), r, "u");
    const auto plan = objective::sample_mask_plan(u.sequence, sil, 0.15, 0.5, r);
    for (std::size_t t = 0; t < u.sequence.length(); ++t) {
      if (corpus::is_major_sil(u.sequence.frame(t), sil, 0.5)) ++major_sil_frames;
    }
    for (auto t : plan.targets()) {
      if (corpus::is_major_sil(u.sequence.frame(t), sil, 0.5)) ++sil_targets;
    }
    frames += u.sequence.length();
    ++plans;
  }
  return {pk > 0.01 && worst_z <= 3.0 && sil_targets == 0,
          fmt("chi-square on k: p = %.4f; max position deviation %.2f sigma; %zu plans over %zu frames "
              "(%zu major-SIL): %zu major-SIL targets",
              pk, worst_z, plans, frames, major_sil_frames, sil_targets)};
}

Outcome pretraining_effectiveness() {
  const auto g = corpus::default_grammar();
  const auto data = sequences(corpus::generate_corpus(g, 2000, 5));
  auto cfg = tiny_run_config();
  cfg.epochs = 10;
  const auto r = train::pretrain(data, g.vocab.sil_index(), cfg, 5);
  const double a = r.initial_holdout_loss().value_or(NAN), b = r.final_holdout_loss().value_or(NAN);
  const double drop = (a - b) / a;
  return {drop >= 0.20, fmt("%zu train / %zu held out, %llu steps: held-out masked loss %.4f -> %.4f (%.1f%% drop)",
                            r.train_size, r.holdout_size, static_cast<unsigned long long>(r.checkpoint.step), a, b,
                            100.0 * drop)};
}

Outcome transfer_benefit() {
  const auto g = corpus::default_grammar();
  const std::vector<double> fractions = {0.2, 1.0};
  double pre20 = 0.0, fresh20 = 0.0, pre100 = 0.0, fresh100 = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto unlabeled = sequences(corpus::generate_corpus(g, 2000, 100 + seed));
    const auto labeled = corpus::generate_corpus(g, 500, 200 + seed);
    auto cfg = tiny_run_config();
    cfg.epochs = 10;
    const auto table =
        train::ablate_fraction(unlabeled, labeled, g.num_classes(), g.vocab.sil_index(), fractions, cfg, seed);
    const auto& r20 = table.rows[0];
    const auto& r100 = table.rows[1];
    pre20 += r20.pretrained.accuracy() / 3.0;
    fresh20 += r20.fresh->accuracy() / 3.0;
    pre100 += r100.pretrained.accuracy() / 3.0;
    fresh100 += r100.fresh->accuracy() / 3.0;
    per_seed += fmt(" [seed %llu: 20%% %.3f/%.3f, 100%% %.3f/%.3f]", static_cast<unsigned long long>(seed),
                    r20.pretrained.accuracy(), r20.fresh->accuracy(), r100.pretrained.accuracy(),
                    r100.fresh->accuracy());
  }
  const double gap20 = pre20 - fresh20, gap100 = pre100 - fresh100;
  return {pre20 >= fresh20 && gap100 <= gap20,
          fmt("mean test accuracy pretrained/fresh: 20%% %.4f/%.4f (gap %+.4f), 100%% %.4f/%.4f (gap %+.4f);",
              pre20, fresh20, gap20, pre100, fresh100, gap100) +
              per_seed};
}

Outcome mask_ratio_ablation() {
  const auto g = corpus::default_grammar();
  const auto unlabeled = sequences(corpus::generate_corpus(g, 300, 11));
  const auto labeled = corpus::generate_corpus(g, 150, 12);
  auto cfg = tiny_run_config();
  cfg.epochs = 2;
  cfg.finetune_epochs = 5;
  const std::vector<double> ratios = {0.05, 0.10, 0.15, 0.20};
  const auto table =
      train::ablate_mask_ratio(unlabeled, labeled, g.num_classes(), g.vocab.sil_index(), ratios, cfg, 3);
  std::ostringstream out;
  train::write_table(out, table);
  std::printf("%s", out.str().c_str());
  bool complete = table.rows.size() == ratios.size();
  for (std::size_t i = 0; complete && i < ratios.size(); ++i) {
    complete = table.rows[i].value == ratios[i] && table.rows[i].pretrained.count > 0;
  }
  return {complete, fmt("%zu of 4 grid rows completed; best ratio %.2f", table.rows.size(),
                        table.rows.empty() ? NAN : table.rows[table.best_row].value)};
}

Outcome round_trip_and_determinism() {
  const auto g = corpus::default_grammar();
  const auto labeled = corpus::generate_corpus(g, 40, 21);
  const auto seqs = sequences(labeled);
  const auto V = static_cast<std::uint32_t>(g.vocab.size());
  const auto dir = std::filesystem::temp_directory_path();

  const auto corpus_bytes = corpus::encode_corpus(seqs, V);
  corpus::write_corpus(dir / "bertplm_acceptance.pps", seqs, V);
  const auto back = corpus::read_corpus(dir / "bertplm_acceptance.pps", V);
  const bool corpus_ok = corpus::encode_corpus(back.sequences, back.vocab_size) == corpus_bytes;

  auto cfg = tiny_run_config();
  cfg.epochs = 2;
  cfg.finetune_epochs = 3;
  const auto a = train::pretrain(seqs, g.vocab.sil_index(), cfg, 4);
  const auto b = train::pretrain(seqs, g.vocab.sil_index(), cfg, 4);
  const auto ckpt_bytes = train::encode_checkpoint(a.checkpoint);
  train::save_checkpoint(dir / "bertplm_acceptance.ckpt", a.checkpoint);
  const bool ckpt_ok =
      train::encode_checkpoint(train::load_checkpoint(dir / "bertplm_acceptance.ckpt")) == ckpt_bytes;
  const bool pre_same = train::encode_checkpoint(b.checkpoint) == ckpt_bytes;

  const auto init = a.checkpoint.encoder();
  const auto f1 = train::finetune(init, labeled, g.num_classes(), g.vocab.sil_index(), cfg, 4);
  const auto f2 = train::finetune(init, labeled, g.num_classes(), g.vocab.sil_index(), cfg, 4);
  const bool ft_same = train::encode_checkpoint(f1.checkpoint) == train::encode_checkpoint(f2.checkpoint);

  std::filesystem::remove(dir / "bertplm_acceptance.pps");
  std::filesystem::remove(dir / "bertplm_acceptance.ckpt");
  return {corpus_ok && ckpt_ok && pre_same && ft_same,
          fmt("corpus round trip %s (%zu bytes), checkpoint round trip %s (%zu bytes), same-seed pre-training %s, "
              "same-seed fine-tuning %s",
              corpus_ok ? "bitwise" : "DIFFERS", corpus_bytes.size(), ckpt_ok ? "bitwise" : "DIFFERS",
              ckpt_bytes.size(), pre_same ? "identical" : "DIFFERS", ft_same ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"theorem oracle", theorem_oracle},
      {"gradient fidelity", gradient_fidelity},
      {"no leakage", no_leakage},
      {"mask law", mask_law},
      {"pre-training effectiveness", pretraining_effectiveness},
      {"transfer benefit", transfer_benefit},
      {"mask-ratio ablation", mask_ratio_ablation},
      {"round trip and determinism", round_trip_and_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %zu (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
