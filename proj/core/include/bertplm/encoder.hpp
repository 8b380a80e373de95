#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bertplm/mask_plan.hpp"
#include "bertplm/ops.hpp"
#include "bertplm/posterior.hpp"
#include "bertplm/rng.hpp"

namespace bertplm::model {

/// Sequence longer than the configured maximum.
class LengthError : public DataError {
 public:
  using DataError::DataError;
};

struct EncoderConfig {
  std::size_t layers = 4;
  std::size_t d_model = 576;
  std::size_t d_ff = 1600;
  std::size_t heads = 8;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = corpus::kDefaultMaxSeqLen;
  double dropout = 0.1;
  double layer_norm_eps = 1e-5;
  double init_std = 0.02;

  std::size_t head_dim() const { return d_model / heads; }
  /// Throws ContractError unless every size is positive and heads divides d_model.
  void validate() const;

  /// Desk-scale profile: 2 layers, width 64, feed-forward 128, 4 heads.
  static EncoderConfig tiny(std::size_t vocab_size);

  bool operator==(const EncoderConfig&) const = default;
};

/// Ordered collection of named arrays.
class ParamSet {
 public:
  std::size_t add(std::string name, ad::Tensor value);
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const ad::Tensor& operator[](std::size_t i) const { return values_[i]; }
  ad::Tensor& operator[](std::size_t i) { return values_[i]; }
  std::span<const ad::Tensor> values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<ad::Tensor> values_;
};

struct LayerSlots {
  std::size_t query, key, value, output, rel_proj;
  std::size_t content_bias, position_bias;  // u and v, stored as 1 x d
  std::size_t ln1_gamma, ln1_beta;
  std::size_t ff_in, ff_in_bias, ff_out, ff_out_bias;
  std::size_t ln2_gamma, ln2_beta;
};

/// All learnable arrays of the encoder plus the optional classifier head.
class EncoderParams {
 public:
  /// Random init: N(0, init_std) weights, unit LayerNorm scales, zero biases.
  static EncoderParams initialize(const EncoderConfig& config, Rng& rng);
  /// Adopts named arrays (e.g. from a checkpoint); ShapeError on a missing or
  /// mis-shaped array. Classifier arrays are optional.
  static EncoderParams from_named(const EncoderConfig& config, const ParamSet& named);

  /// Adds a freshly initialised classes x d classifier (replacing any present).
  void add_classifier(std::size_t classes, Rng& rng);
  bool has_classifier() const { return classifier_weight_.has_value(); }
  std::size_t num_classes() const;

  const EncoderConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }

  std::size_t embedding() const { return embedding_; }
  std::size_t mask_vector() const { return mask_vector_; }
  std::size_t pool_query() const { return pool_query_; }
  std::size_t classifier_weight() const;
  std::size_t classifier_bias() const;
  const LayerSlots& layer(std::size_t i) const { return layers_.at(i); }

 private:
  EncoderParams() = default;
  void register_slots();

  EncoderConfig config_;
  ParamSet params_;
  std::size_t embedding_ = 0, mask_vector_ = 0, pool_query_ = 0;
  std::optional<std::size_t> classifier_weight_, classifier_bias_;
  std::vector<LayerSlots> layers_;
};

/// EncoderParams bound to leaves on a tape.
class BoundEncoder {
 public:
  /// Registers every array as a differentiable leaf.
  BoundEncoder(ad::Tape& tape, const EncoderParams& params);
  /// Uses caller-provided leaves, in ParamSet order.
  BoundEncoder(const EncoderParams& params, std::span<const ad::Var> leaves);

  ad::Tape& tape() const { return *tape_; }
  const EncoderParams& params() const { return *params_; }
  const EncoderConfig& config() const { return params_->config(); }
  const ad::Var& var(std::size_t slot) const { return vars_[slot]; }
  std::span<const ad::Var> vars() const { return vars_; }

 private:
  ad::Tape* tape_;
  const EncoderParams* params_;
  std::vector<ad::Var> vars_;
};

/// allowed(i, j): query position i may attend to key position j.
class AttentionMask {
 public:
  AttentionMask(std::size_t length, std::vector<std::uint8_t> allowed);
  /// Context rows see context columns; target rows see context columns and
  /// themselves.
  static AttentionMask from_plan(const objective::MaskPlan& plan);
  static AttentionMask full(std::size_t length);
  static AttentionMask self_only(std::size_t length);

  std::size_t length() const { return length_; }
  bool allowed(std::size_t i, std::size_t j) const { return allowed_[i * length_ + j] != 0; }
  /// 1 where attention is blocked, row-major T x T.
  std::vector<std::uint8_t> blocked() const;

 private:
  std::size_t length_;
  std::vector<std::uint8_t> allowed_;
};

struct ForwardOptions {
  bool train = false;  // enables dropout
  std::uint64_t dropout_seed = 0;
};

/// Per-head diagnostics of one attention block.
struct AttentionTrace {
  std::vector<ad::Tensor> scores;   // scaled scores before masking
  std::vector<ad::Tensor> weights;  // softmax output
};

struct EncoderTrace {
  std::vector<AttentionTrace> layers;
};

/// Sinusoidal embeddings of offsets -(T-1)..(T-1); row r holds offset r-(T-1).
/// Offsets are clipped to +-(max_seq_len-1).
ad::Tensor relative_position_table(std::size_t length, std::size_t width, std::size_t max_seq_len);

/// Row t = sum_v frames[t, v] * E[v, :].
ad::Var embed_posteriors(const ad::Var& embedding, const ad::Var& frames);

/// Replaces the rows at the plan's targets with `mask_vector`.
ad::Var apply_mask_plan(const ad::Var& embeddings, const objective::MaskPlan& plan, const ad::Var& mask_vector);

/// One post-LN Transformer block with relative-position attention:
/// score(i,j) = [(q_i + u) . k_j + (q_i + v) . r(i-j)] / sqrt(d_head).
ad::Var rel_attention_block(const BoundEncoder& enc, std::size_t layer, const ad::Var& x, const AttentionMask& mask,
                            const ForwardOptions& opts = {}, AttentionTrace* trace = nullptr);

/// embed -> mask -> L blocks under the plan's attention mask. T x d result.
ad::Var encode(const BoundEncoder& enc, const corpus::PhonemePosteriorSequence& seq, const objective::MaskPlan& plan,
               const ForwardOptions& opts = {}, EncoderTrace* trace = nullptr);

/// hidden . E^T; logits over the phoneme vocabulary.
ad::Var predict_phonemes(const ad::Var& hidden, const ad::Var& embedding);

/// Single-head attention pooling with a trainable query over `valid` rows.
ad::Var attentive_pool(const ad::Var& hidden, const ad::Var& query, std::span<const std::size_t> valid);

/// Pool over `valid` rows, then the classifier head: 1 x classes logits.
ad::Var classify(const BoundEncoder& enc, const ad::Var& hidden, std::span<const std::size_t> valid);

}  // namespace bertplm::model
