// bertplm: data generation, pre-training, fine-tuning, evaluation, and the
// verification and ablation harnesses.
//
// Exit codes: 0 success, 1 usage or config error, 2 data or file-format error,
// 3 verification failure (theorem or gradient check beyond tolerance).

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bertplm/checkpoint.hpp"
#include "bertplm/config.hpp"
#include "bertplm/corpus_io.hpp"
#include "bertplm/diagnostics.hpp"
#include "bertplm/oracle.hpp"
#include "bertplm/synth.hpp"
#include "bertplm/trainer.hpp"
#include "bertplm/vocab.hpp"

namespace fs = std::filesystem;
using namespace bertplm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

struct ConfigOptions {
  std::string path;
  std::vector<std::string> overrides;
  bool print = false;
};

void add_config_options(CLI::App* sub, ConfigOptions& o) {
  sub->add_option("--config", o.path, "Config file (key = value per line)")->check(CLI::ExistingFile);
  sub->add_option("--set", o.overrides, "KEY=VALUE override, wins over the config file (repeatable)");
  sub->add_flag("--print-config", o.print, "Print the fully resolved config and exit");
}

config::Config resolve(const ConfigOptions& o) {
  std::vector<config::Override> ov;
  for (const auto& s : o.overrides) ov.push_back(config::parse_override(s));
  return o.path.empty() ? config::parse_config_text("", ov) : config::parse_config(o.path, ov);
}

std::vector<double> parse_csv(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CLI::ValidationError("list", "'" + item + "' is not a number");
    }
  }
  if (out.empty()) throw CLI::ValidationError("list", "empty list");
  return out;
}

fs::path vocab_path_for(const std::string& data, const std::string& vocab) {
  if (!vocab.empty()) return vocab;
  return fs::path(data).replace_extension(".vocab");
}

struct Unlabeled {
  corpus::PhonemeVocab vocab;
  std::vector<corpus::PhonemePosteriorSequence> sequences;
};

Unlabeled load_unlabeled(const std::string& data, const std::string& vocab) {
  auto v = corpus::read_vocab(vocab_path_for(data, vocab));
  auto file = corpus::read_corpus(data, static_cast<std::uint32_t>(v.size()));
  return {std::move(v), std::move(file.sequences)};
}

struct Labeled {
  corpus::PhonemeVocab vocab;
  std::vector<corpus::LabeledUtterance> utterances;
  std::vector<std::string> class_names;
};

Labeled load_labeled(const std::string& data, const std::string& manifest, const std::string& vocab) {
  auto u = load_unlabeled(data, vocab);
  const auto entries = corpus::read_manifest(manifest);
  auto names = corpus::class_names(entries);
  auto labeled = corpus::attach_labels(std::move(u.sequences), entries);
  return {std::move(u.vocab), std::move(labeled), std::move(names)};
}

void print_metrics(std::ostream& out, const train::EvalMetrics& m, const std::vector<std::string>& names) {
  out << std::fixed << std::setprecision(6);
  out << "utterances\t" << m.count << '\n';
  out << "error_rate\t" << m.error_rate << '\n';
  out << "macro_f1\t" << m.macro_f1 << '\n';
  out << "micro_f1\t" << m.micro_f1 << '\n';
  for (auto c : m.unsupported_classes) {
    out << "unsupported_class\t" << (c < names.size() ? names[c] : std::to_string(c)) << "\tf1 counted as 0\n";
  }
  out << std::defaultfloat;
}

// Progress log goes to a file when given, stdout otherwise.
class LogSink {
 public:
  explicit LogSink(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw DataError("cannot write log file " + path);
    }
  }
  std::ostream* stream() { return file_ ? file_.get() : &std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BERT-style masked pre-training over phoneme posteriors for intent classification"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out, data, manifest, vocab, ckpt, log_path, grammar = "default", pretrain_data;
  std::size_t utterances = 1000, max_t = 5, trials = 20, length = 12, vocab_size = 8;
  std::string ratios = "0.05,0.10,0.15,0.20", fractions = "0.1,0.2,0.5,1.0", predictor = "random";
  double eps = 1e-5, tolerance = 0.0, floor = ad::kGradCheckFloor;
  ConfigOptions cfg_opts;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic posterior corpus and label manifest");
  gen->add_option("--grammar", grammar, "default | separable")->capture_default_str();
  gen->add_option("--utterances", utterances, "Number of utterances")->capture_default_str();
  gen->add_option("--seed", seed, "Run seed")->capture_default_str();
  gen->add_option("--out", out, "Corpus path (.pps)")->required();
  gen->add_option("--manifest", manifest, "Label manifest path (TSV); omitted for unlabeled corpora");
  gen->add_option("--vocab", vocab, "Vocabulary path (default: corpus path with .vocab)");

  auto* pre = app.add_subcommand("pretrain", "Masked-prediction pre-training");
  pre->add_option("--data", data, "Corpus path (.pps)")->required()->check(CLI::ExistingFile);
  pre->add_option("--vocab", vocab, "Vocabulary path (default: corpus path with .vocab)");
  pre->add_option("--seed", seed, "Run seed")->capture_default_str();
  pre->add_option("--out", out, "Checkpoint path (.ckpt)");
  pre->add_option("--log", log_path, "Progress log path (default stdout)");
  add_config_options(pre, cfg_opts);

  auto* fin = app.add_subcommand("finetune", "Fine-tune an intent classifier");
  fin->add_option("--data", data, "Corpus path (.pps)")->required()->check(CLI::ExistingFile);
  fin->add_option("--manifest", manifest, "Label manifest (TSV)")->required()->check(CLI::ExistingFile);
  fin->add_option("--vocab", vocab, "Vocabulary path (default: corpus path with .vocab)");
  fin->add_option("--ckpt", ckpt, "Pre-trained checkpoint (omit to start from random weights)")
      ->check(CLI::ExistingFile);
  fin->add_option("--seed", seed, "Run seed")->capture_default_str();
  fin->add_option("--out", out, "Output checkpoint path (.ckpt)");
  fin->add_option("--log", log_path, "Progress log path (default stdout)");
  add_config_options(fin, cfg_opts);

  auto* eval = app.add_subcommand("evaluate", "Error rate and F1 of a fine-tuned checkpoint");
  eval->add_option("--ckpt", ckpt, "Checkpoint with a classifier head")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Corpus path (.pps)")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", manifest, "Label manifest (TSV)")->required()->check(CLI::ExistingFile);
  eval->add_option("--vocab", vocab, "Vocabulary path (default: corpus path with .vocab)");

  auto* theorem = app.add_subcommand("verify-theorem",
                                     "Brute-force permutation vs. subset expectations for T = 2..max-T");
  theorem->add_option("--max-T", max_t, "Largest sequence length (<= 8)")->capture_default_str();
  theorem->add_option("--trials", trials, "Random predictors per (T, c)")->capture_default_str();
  theorem->add_option("--seed", seed, "Run seed")->capture_default_str();
  theorem->add_option("--predictor", predictor, "random | encoder | uniform")->capture_default_str();
  theorem->add_option("--vocab-size", vocab_size, "Symbols per position")->capture_default_str();

  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of both losses on a tiny encoder");
  grad->add_option("--seed", seed, "Run seed")->capture_default_str();
  grad->add_option("--length", length, "Frames in the test sequence")->capture_default_str();
  grad->add_option("--vocab-size", vocab_size, "Phoneme vocabulary size")->capture_default_str();
  grad->add_option("--eps", eps, "Central-difference step")->capture_default_str();
  grad->add_option("--floor", floor, "Lower bound on the relative-error denominator")->capture_default_str();

  auto* abl_mask = app.add_subcommand("ablate-mask", "Pre-train and fine-tune once per mask ratio");
  auto* abl_frac = app.add_subcommand("ablate-fraction", "Pre-trained vs. fresh fine-tuning per labeled fraction");
  for (auto* sub : {abl_mask, abl_frac}) {
    sub->add_option("--data", data, "Labeled corpus (.pps)")->required()->check(CLI::ExistingFile);
    sub->add_option("--manifest", manifest, "Label manifest (TSV)")->required()->check(CLI::ExistingFile);
    sub->add_option("--vocab", vocab, "Vocabulary path (default: corpus path with .vocab)");
    sub->add_option("--pretrain-data", pretrain_data, "Unlabeled corpus for pre-training (default: --data)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Run seed")->capture_default_str();
    sub->add_option("--out", out, "Also write the table to this path");
    sub->add_option("--log", log_path, "Progress log path (default: discarded)");
    add_config_options(sub, cfg_opts);
  }
  abl_mask->add_option("--ratios", ratios, "Comma-separated mask ratios")->capture_default_str();
  abl_frac->add_option("--fractions", fractions, "Comma-separated labeled-data fractions")->capture_default_str();

  for (auto* sub : {theorem, grad}) {
    sub->add_option("--tolerance", tolerance, "Failure threshold (default 1e-9 theorem, 1e-4 gradients)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const auto g = corpus::grammar_by_name(grammar);
      const auto corpus = corpus::generate_corpus(g, utterances, seed);
      corpus::write_corpus(out, corpus, static_cast<std::uint32_t>(g.vocab.size()), g.max_seq_len);
      corpus::write_vocab(vocab_path_for(out, vocab), g.vocab);
      std::size_t frames = 0;
      for (const auto& u : corpus) frames += u.sequence.length();
      if (!manifest.empty()) {
        std::vector<corpus::ManifestEntry> entries;
        for (const auto& u : corpus) entries.push_back({u.sequence.utterance_id, u.label, g.class_names[u.label]});
        corpus::write_manifest(manifest, entries);
      }
      // The channel parameters are fixed by the grammar name; record how the
      // corpus was made next to it.
      std::ofstream meta(fs::path(out).string() + ".gen");
      meta << "grammar = " << grammar << "\nutterances = " << utterances << "\nseed = " << seed << '\n';
      std::cout << "wrote " << corpus.size() << " utterances (" << frames << " frames) to " << out << '\n';
      return kExitOk;
    }

    if (theorem->parsed()) {
      if (max_t < 2 || max_t > oracle::kMaxEnumerationLength) {
        std::cerr << "--max-T must lie in [2, " << oracle::kMaxEnumerationLength << "]\n";
        return kExitUsage;
      }
      const double tol = tolerance > 0.0 ? tolerance : 1e-9;
      oracle::PredictorFactory factory;
      if (predictor == "random") {
        factory = diagnostics::random_predictor_factory(vocab_size);
      } else if (predictor == "encoder") {
        auto c = model::EncoderConfig::tiny(vocab_size);
        c.dropout = 0.0;
        factory = diagnostics::frozen_encoder_factory(c);
      } else if (predictor == "uniform") {
        factory = [&](std::size_t T, Rng&) { return oracle::uniform_predictor(T, vocab_size); };
      } else {
        std::cerr << "--predictor must be random, encoder, or uniform\n";
        return kExitUsage;
      }
      double worst = 0.0;
      std::cout << "T\tc\tdev_exact\tdev_sum_form\ttrials\n" << std::scientific << std::setprecision(3);
      for (std::size_t T = 2; T <= max_t; ++T) {
        for (std::size_t c = 1; c < T; ++c) {
          const auto reports = oracle::verify_theorem(factory, T, c, trials, Rng(seed).split(T * 16 + c));
          double de = 0.0, dp = 0.0;
          for (const auto& r : reports) {
            de = std::max(de, r.dev_exact);
            dp = std::max(dp, r.dev_sum_form);
          }
          worst = std::max(worst, de);
          std::cout << T << '\t' << c << '\t' << de << '\t' << dp << '\t' << trials << '\n';
        }
      }
      std::cout << "max_dev_exact\t" << worst << '\n';
      return worst <= tol ? kExitOk : kExitVerification;
    }

    if (grad->parsed()) {
      const double tol = tolerance > 0.0 ? tolerance : 1e-4;
      const auto c = diagnostics::make_gradient_case(length, vocab_size, seed);
      const auto plm = diagnostics::check_plm_gradients(c, eps, floor);
      const auto ft = diagnostics::check_finetune_gradients(c, eps, floor);
      std::cout << "objective\tmax_rel_error\tmax_abs_error\tentries\n" << std::scientific << std::setprecision(3);
      std::cout << "bert_plm_loss\t" << plm.max_rel_error << '\t' << plm.max_abs_error << '\t' << plm.entries_checked
                << '\n';
      std::cout << "finetune_loss\t" << ft.max_rel_error << '\t' << ft.max_abs_error << '\t' << ft.entries_checked
                << '\n';
      return std::max(plm.max_rel_error, ft.max_rel_error) <= tol ? kExitOk : kExitVerification;
    }

    if (eval->parsed()) {
      const auto ck = train::load_checkpoint(ckpt);
      const auto labeled = load_labeled(data, manifest, vocab);
      const auto params = ck.encoder();
      if (!params.has_classifier()) {
        std::cerr << "checkpoint has no classifier head; fine-tune it first\n";
        return kExitUsage;
      }
      print_metrics(std::cout, train::evaluate(params, labeled.utterances), labeled.class_names);
      return kExitOk;
    }

    // Remaining subcommands take a config.
    const config::Config cfg = resolve(cfg_opts);
    if (cfg_opts.print) {
      std::cout << config::to_text(cfg);
      return kExitOk;
    }

    if (pre->parsed()) {
      const auto u = load_unlabeled(data, vocab);
      LogSink log(log_path);
      train::TrainIo io{log.stream(), out.empty() ? std::nullopt : std::optional<fs::path>(out)};
      const auto r = train::pretrain(u.sequences, u.vocab.sil_index(), cfg, seed, io);
      if (!out.empty()) train::save_checkpoint(out, r.checkpoint);
      std::cerr << "pre-trained " << r.checkpoint.step << " steps on " << r.train_size << " utterances ("
                << r.skipped << " skipped, " << r.holdout_size << " held out)\n";
      if (r.initial_holdout_loss()) {
        std::cerr << "held-out masked loss " << *r.initial_holdout_loss() << " -> " << *r.final_holdout_loss()
                  << '\n';
      }
      return kExitOk;
    }

    if (fin->parsed()) {
      const auto labeled = load_labeled(data, manifest, vocab);
      std::optional<model::EncoderParams> init;
      if (!ckpt.empty()) init = train::load_checkpoint(ckpt).encoder();
      LogSink log(log_path);
      train::TrainIo io{log.stream(), out.empty() ? std::nullopt : std::optional<fs::path>(out)};
      const auto r = train::finetune(init, labeled.utterances, labeled.class_names.size(),
                                     labeled.vocab.sil_index(), cfg, seed, io);
      if (!out.empty()) train::save_checkpoint(out, r.checkpoint);
      if (!r.test) {
        std::cerr << "test split is empty; metrics are undefined\n";
        return kExitData;
      }
      print_metrics(std::cout, *r.test, labeled.class_names);
      return kExitOk;
    }

    if (abl_mask->parsed() || abl_frac->parsed()) {
      const auto labeled = load_labeled(data, manifest, vocab);
      std::vector<corpus::PhonemePosteriorSequence> unlabeled;
      if (pretrain_data.empty()) {
        for (const auto& u : labeled.utterances) unlabeled.push_back(u.sequence);
      } else {
        unlabeled = load_unlabeled(pretrain_data, vocab).sequences;
      }
      std::ofstream log_file;
      train::TrainIo io;
      if (!log_path.empty()) {
        log_file.open(log_path);
        io.log = &log_file;
      }
      const auto C = labeled.class_names.size();
      const auto sil = labeled.vocab.sil_index();
      const auto table = abl_mask->parsed()
                             ? train::ablate_mask_ratio(unlabeled, labeled.utterances, C, sil, parse_csv(ratios), cfg,
                                                        seed, io)
                             : train::ablate_fraction(unlabeled, labeled.utterances, C, sil, parse_csv(fractions), cfg,
                                                      seed, io);
      train::write_table(std::cout, table);
      if (!out.empty()) {
        std::ofstream f(out);
        train::write_table(f, table);
      }
      return kExitOk;
    }
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
