#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bertplm/checkpoint.hpp"
#include "bertplm/config.hpp"
#include "bertplm/encoder.hpp"
#include "bertplm/metrics.hpp"
#include "bertplm/posterior.hpp"

namespace bertplm::train {

/// Optional outputs of a training run. Log lines are
/// `step<TAB>split<TAB>metric<TAB>value`.
struct TrainIo {
  std::ostream* log = nullptr;
  /// Rewritten atomically at the end of every epoch.
  std::optional<std::filesystem::path> checkpoint_path;
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::size_t train_size = 0;
  std::size_t holdout_size = 0;
  std::size_t skipped = 0;  // utterances with no eligible frame
  /// (step, mean masked loss on the held-out utterances); the first entry is
  /// the initial parameters. Empty when there is no held-out split.
  std::vector<std::pair<std::uint64_t, double>> holdout_curve;

  std::optional<double> initial_holdout_loss() const;
  std::optional<double> final_holdout_loss() const;
};

/// Masked-prediction pre-training from random initialisation. Sequences carry
/// no labels. Every epoch shuffles the training utterances, draws a fresh mask
/// plan per utterance, averages gradients over `batch_size` utterances, and
/// takes one Adam step. A fixed held-out split (with fixed plans) tracks
/// progress. DataError when no utterance has an eligible frame.
PretrainResult pretrain(std::span<const corpus::PhonemePosteriorSequence> corpus, std::size_t sil_index,
                        const config::Config& cfg, std::uint64_t seed, const TrainIo& io = {});

/// Mean masked loss over `corpus` under the given plans, without dropout.
double masked_loss(const model::EncoderParams& params, std::span<const corpus::PhonemePosteriorSequence> corpus,
                   std::span<const objective::MaskPlan> plans, objective::PlmWeighting weighting);

struct DataSplit {
  std::vector<std::size_t> train, valid, test;
};

/// Stratified by class: per class, test_fraction goes to test, valid_fraction
/// of the rest to validation, the remainder to training; training is then
/// subsampled to train_fraction (at least one item per class that has any).
DataSplit split_labeled(std::span<const corpus::LabeledUtterance> data, std::size_t num_classes,
                        const config::Config& cfg, std::uint64_t seed);

struct FinetuneResult {
  Checkpoint checkpoint;  // parameters of the best validation epoch
  DataSplit split;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::optional<EvalMetrics> valid;
  std::optional<EvalMetrics> test;
};

/// Adds a fresh classifier head to `init` (or to a random encoder when empty)
/// and optimises cls + lambda * masked loss. Each epoch is scored on the
/// validation split; training stops after `patience` epochs without
/// improvement and the best epoch is kept. DataError on labels >= num_classes.
FinetuneResult finetune(const std::optional<model::EncoderParams>& init,
                        std::span<const corpus::LabeledUtterance> data, std::size_t num_classes,
                        std::size_t sil_index, const config::Config& cfg, std::uint64_t seed, const TrainIo& io = {});

/// Argmax class of the pooled encoder output over all frames.
std::size_t predict(const model::EncoderParams& params, const corpus::PhonemePosteriorSequence& seq);

/// ContractError without a classifier head; DataError on an empty set.
EvalMetrics evaluate(const model::EncoderParams& params, std::span<const corpus::LabeledUtterance> data);

struct AblationRow {
  double value = 0.0;
  std::optional<double> holdout_loss;  // final held-out masked loss, when pre-trained
  EvalMetrics pretrained;
  std::optional<EvalMetrics> fresh;  // same budget from random initialisation
};

struct AblationTable {
  std::string parameter;
  std::vector<AblationRow> rows;
  std::size_t best_row = 0;  // lowest pre-trained test error, first on ties
};

/// Pre-train on `unlabeled` with each mask ratio, then fine-tune on `labeled`
/// with the same ratio; the seed is shared by all rows.
AblationTable ablate_mask_ratio(std::span<const corpus::PhonemePosteriorSequence> unlabeled,
                                std::span<const corpus::LabeledUtterance> labeled, std::size_t num_classes,
                                std::size_t sil_index, std::span<const double> ratios, const config::Config& cfg,
                                std::uint64_t seed, const TrainIo& io = {});

/// Pre-train once, then fine-tune with each labeled-data fraction from the
/// pre-trained encoder and from scratch.
AblationTable ablate_fraction(std::span<const corpus::PhonemePosteriorSequence> unlabeled,
                              std::span<const corpus::LabeledUtterance> labeled, std::size_t num_classes,
                              std::size_t sil_index, std::span<const double> fractions, const config::Config& cfg,
                              std::uint64_t seed, const TrainIo& io = {});

/// Tab-separated table with a header row and a final `best` line.
void write_table(std::ostream& out, const AblationTable& table);

}  // namespace bertplm::train
