#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bertplm/encoder.hpp"
#include "bertplm/errors.hpp"
#include "bertplm/objective.hpp"
#include "bertplm/optim.hpp"

namespace bertplm::config {

/// Unknown key or unparsable value. line() is 0 for command-line overrides.
class ConfigError : public DataError {
 public:
  ConfigError(const std::string& what, std::string key, std::size_t line)
      : DataError(what), key_(std::move(key)), line_(line) {}
  const std::string& key() const { return key_; }
  std::size_t line() const { return line_; }

 private:
  std::string key_;
  std::size_t line_;
};

/// Fully resolved run configuration. Model and optimizer defaults are the
/// full-size settings; the remaining keys are harness choices.
struct Config {
  // encoder
  std::size_t layers = 4;
  std::size_t d_model = 576;
  std::size_t d_ff = 1600;
  std::size_t heads = 8;
  std::size_t max_seq_len = 320;
  double dropout = 0.1;
  double init_std = 0.02;
  double layer_norm_eps = 1e-5;

  // objective
  double mask_ratio_max = 0.15;
  double sil_threshold = 0.5;
  objective::PlmWeighting plm_weighting = objective::PlmWeighting::Mean;
  double finetune_lambda = 1.0;

  // optimisation
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::size_t finetune_epochs = 30;
  std::size_t patience = 3;
  std::size_t eval_every = 0;  // steps between held-out evaluations; 0 = once per epoch

  // data splits
  double holdout_fraction = 0.05;
  double valid_fraction = 0.1;
  double test_fraction = 0.2;
  double train_fraction = 1.0;

  model::EncoderConfig encoder(std::size_t vocab_size) const;
  train::AdamHyper adam() const;
  /// Range checks (fractions in [0,1], positive sizes, ...); ConfigError.
  void validate() const;

  bool operator==(const Config&) const = default;
};

using Override = std::pair<std::string, std::string>;

/// `key = value` lines, `#` starts a comment. Overrides are applied after the
/// file and win over it. The result is validated.
Config parse_config_text(std::string_view text, std::span<const Override> overrides = {});
Config parse_config(const std::filesystem::path& path, std::span<const Override> overrides = {});

/// Splits "key=value"; ConfigError when there is no '='.
Override parse_override(std::string_view text);

/// Every key with its resolved value, one `key = value` per line, in a fixed
/// order. parse_config_text(to_text(c)) == c.
std::string to_text(const Config& c);

std::vector<std::string> valid_keys();

}  // namespace bertplm::config
