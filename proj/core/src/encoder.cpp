#include "bertplm/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bertplm::model {

using ad::Tensor;
using ad::Var;

void EncoderConfig::validate() const {
  if (layers == 0 || d_model == 0 || d_ff == 0 || heads == 0 || vocab_size == 0 || max_seq_len == 0) {
    throw ContractError("encoder config: all sizes must be positive");
  }
  if (d_model % heads != 0) throw ContractError("encoder config: d_model must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("encoder config: dropout outside [0, 1)");
  if (!(layer_norm_eps > 0.0)) throw ContractError("encoder config: layer_norm_eps must be positive");
}

EncoderConfig EncoderConfig::tiny(std::size_t vocab_size) {
  EncoderConfig c;
  c.layers = 2;
  c.d_model = 64;
  c.d_ff = 128;
  c.heads = 4;
  c.vocab_size = vocab_size;
  return c;
}

std::size_t ParamSet::add(std::string name, Tensor value) {
  if (find(name)) throw ContractError("duplicate parameter name " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::optional<std::size_t> ParamSet::find(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

namespace {

struct ArraySpec {
  std::string name;
  ad::Dims dims;
  enum class Init { Normal, Ones, Zeros } init;
};

std::vector<ArraySpec> encoder_specs(const EncoderConfig& c) {
  using I = ArraySpec::Init;
  const std::size_t d = c.d_model;
  std::vector<ArraySpec> specs = {
      {"phoneme_embedding", {c.vocab_size, d}, I::Normal},
      {"mask_vector", {1, d}, I::Normal},
      {"pool_query", {1, d}, I::Normal},
  };
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    specs.push_back({p + "attn.query", {d, d}, I::Normal});
    specs.push_back({p + "attn.key", {d, d}, I::Normal});
    specs.push_back({p + "attn.value", {d, d}, I::Normal});
    specs.push_back({p + "attn.output", {d, d}, I::Normal});
    specs.push_back({p + "attn.rel_proj", {d, d}, I::Normal});
    specs.push_back({p + "attn.content_bias", {1, d}, I::Normal});
    specs.push_back({p + "attn.position_bias", {1, d}, I::Normal});
    specs.push_back({p + "ln1.gamma", {d}, I::Ones});
    specs.push_back({p + "ln1.beta", {d}, I::Zeros});
    specs.push_back({p + "ffn.in", {d, c.d_ff}, I::Normal});
    specs.push_back({p + "ffn.in_bias", {c.d_ff}, I::Zeros});
    specs.push_back({p + "ffn.out", {c.d_ff, d}, I::Normal});
    specs.push_back({p + "ffn.out_bias", {d}, I::Zeros});
    specs.push_back({p + "ln2.gamma", {d}, I::Ones});
    specs.push_back({p + "ln2.beta", {d}, I::Zeros});
  }
  return specs;
}

Tensor make_array(const ArraySpec& spec, double std, Rng& rng) {
  switch (spec.init) {
    case ArraySpec::Init::Ones:
      return Tensor::filled(spec.dims, 1.0);
    case ArraySpec::Init::Zeros:
      return Tensor(spec.dims);
    case ArraySpec::Init::Normal:
      break;
  }
  Rng stream = rng.split(spec.name);
  std::vector<double> v(ad::element_count(spec.dims));
  for (auto& x : v) x = stream.normal(0.0, std);
  return Tensor(spec.dims, std::move(v));
}

}  // namespace

EncoderParams EncoderParams::initialize(const EncoderConfig& config, Rng& rng) {
  config.validate();
  EncoderParams p;
  p.config_ = config;
  for (const auto& spec : encoder_specs(config)) p.params_.add(spec.name, make_array(spec, config.init_std, rng));
  p.register_slots();
  return p;
}

EncoderParams EncoderParams::from_named(const EncoderConfig& config, const ParamSet& named) {
  config.validate();
  EncoderParams p;
  p.config_ = config;
  for (const auto& spec : encoder_specs(config)) {
    const auto idx = named.find(spec.name);
    if (!idx) throw ShapeError("missing parameter array " + spec.name);
    if (named[*idx].dims() != spec.dims) {
      throw ShapeError("parameter " + spec.name + " has dims " + ad::to_string(named[*idx].dims()) + ", expected " +
                       ad::to_string(spec.dims));
    }
    p.params_.add(spec.name, named[*idx]);
  }
  const auto w = named.find("classifier.weight");
  const auto b = named.find("classifier.bias");
  if (w.has_value() != b.has_value()) throw ShapeError("classifier head is incomplete");
  if (w) {
    const auto& wt = named[*w];
    if (wt.rank() != 2 || wt.cols() != config.d_model || named[*b].dims() != ad::Dims{wt.rows()}) {
      throw ShapeError("classifier arrays have inconsistent dims");
    }
    p.params_.add("classifier.weight", wt);
    p.params_.add("classifier.bias", named[*b]);
  }
  p.register_slots();
  return p;
}

void EncoderParams::register_slots() {
  auto at = [this](const std::string& n) { return *params_.find(n); };
  embedding_ = at("phoneme_embedding");
  mask_vector_ = at("mask_vector");
  pool_query_ = at("pool_query");
  layers_.clear();
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    layers_.push_back(LayerSlots{at(p + "attn.query"), at(p + "attn.key"), at(p + "attn.value"),
                                 at(p + "attn.output"), at(p + "attn.rel_proj"), at(p + "attn.content_bias"),
                                 at(p + "attn.position_bias"), at(p + "ln1.gamma"), at(p + "ln1.beta"),
                                 at(p + "ffn.in"), at(p + "ffn.in_bias"), at(p + "ffn.out"),
                                 at(p + "ffn.out_bias"), at(p + "ln2.gamma"), at(p + "ln2.beta")});
  }
  classifier_weight_ = params_.find("classifier.weight");
  classifier_bias_ = params_.find("classifier.bias");
}

void EncoderParams::add_classifier(std::size_t classes, Rng& rng) {
  if (classes == 0) throw ContractError("classifier needs at least one class");
  Tensor w({classes, config_.d_model});
  Rng stream = rng.split("classifier.weight");
  for (auto& x : w.mutable_data()) x = stream.normal(0.0, config_.init_std);
  Tensor b({classes});
  if (classifier_weight_) {
    params_[*classifier_weight_] = std::move(w);
    params_[*classifier_bias_] = std::move(b);
  } else {
    params_.add("classifier.weight", std::move(w));
    params_.add("classifier.bias", std::move(b));
  }
  register_slots();
}

std::size_t EncoderParams::num_classes() const {
  return classifier_weight_ ? params_[*classifier_weight_].rows() : 0;
}

std::size_t EncoderParams::classifier_weight() const {
  if (!classifier_weight_) throw ContractError("encoder has no classifier head");
  return *classifier_weight_;
}

std::size_t EncoderParams::classifier_bias() const {
  if (!classifier_bias_) throw ContractError("encoder has no classifier head");
  return *classifier_bias_;
}

BoundEncoder::BoundEncoder(ad::Tape& tape, const EncoderParams& params) : tape_(&tape), params_(&params) {
  vars_.reserve(params.params().size());
  for (const auto& v : params.params().values()) vars_.push_back(tape.parameter(v));
}

BoundEncoder::BoundEncoder(const EncoderParams& params, std::span<const Var> leaves)
    : tape_(nullptr), params_(&params), vars_(leaves.begin(), leaves.end()) {
  if (vars_.size() != params.params().size() || vars_.empty()) {
    throw ContractError("BoundEncoder: expected one leaf per parameter array");
  }
  tape_ = vars_.front().tape();
}

AttentionMask::AttentionMask(std::size_t length, std::vector<std::uint8_t> allowed)
    : length_(length), allowed_(std::move(allowed)) {
  if (allowed_.size() != length * length) throw ShapeError("attention mask must be T x T");
  for (std::size_t i = 0; i < length; ++i) {
    const auto* row = allowed_.data() + i * length;
    if (std::none_of(row, row + length, [](std::uint8_t a) { return a != 0; })) {
      throw ContractError("attention mask row " + std::to_string(i) + " allows nothing");
    }
  }
}

AttentionMask AttentionMask::from_plan(const objective::MaskPlan& plan) {
  const std::size_t T = plan.length();
  std::vector<std::uint8_t> a(T * T, 0);
  for (std::size_t i = 0; i < T; ++i) {
    for (auto j : plan.context()) a[i * T + j] = 1;
    if (plan.is_target(i)) a[i * T + i] = 1;
  }
  return AttentionMask(T, std::move(a));
}

AttentionMask AttentionMask::full(std::size_t length) {
  return AttentionMask(length, std::vector<std::uint8_t>(length * length, 1));
}

AttentionMask AttentionMask::self_only(std::size_t length) {
  std::vector<std::uint8_t> a(length * length, 0);
  for (std::size_t i = 0; i < length; ++i) a[i * length + i] = 1;
  return AttentionMask(length, std::move(a));
}

std::vector<std::uint8_t> AttentionMask::blocked() const {
  std::vector<std::uint8_t> b(allowed_.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = allowed_[i] ? 0 : 1;
  return b;
}

Tensor relative_position_table(std::size_t length, std::size_t width, std::size_t max_seq_len) {
  const std::size_t rows = 2 * length - 1;
  const double limit = static_cast<double>(max_seq_len - 1);
  std::vector<double> data(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    double offset = static_cast<double>(r) - static_cast<double>(length - 1);
    offset = std::clamp(offset, -limit, limit);
    for (std::size_t k = 0; k < width; k += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(width));
      data[r * width + k] = std::sin(offset * freq);
      if (k + 1 < width) data[r * width + k + 1] = std::cos(offset * freq);
    }
  }
  return Tensor({rows, width}, std::move(data));
}

Var embed_posteriors(const Var& embedding, const Var& frames) {
  if (frames.cols() != embedding.rows()) {
    throw ShapeError("embed_posteriors: posteriors over " + std::to_string(frames.cols()) +
                     " phonemes, embedding has " + std::to_string(embedding.rows()) + " rows");
  }
  return ad::matmul(frames, embedding);
}

Var apply_mask_plan(const Var& embeddings, const objective::MaskPlan& plan, const Var& mask_vector) {
  const std::size_t T = embeddings.rows();
  if (plan.length() != T) {
    throw ContractError("apply_mask_plan: plan covers " + std::to_string(plan.length()) + " frames, sequence has " +
                        std::to_string(T));
  }
  if (plan.targets().empty()) return embeddings;
  // Row T of the stacked matrix is w; targets read it, context rows read themselves.
  std::vector<std::size_t> rows(T);
  for (std::size_t t = 0; t < T; ++t) rows[t] = plan.is_target(t) ? T : t;
  return ad::gather_rows(ad::concat_rows(embeddings, mask_vector), rows);
}

namespace {

std::uint64_t dropout_seed(const ForwardOptions& opts, std::size_t layer, std::size_t site) {
  return Rng::mix(opts.dropout_seed ^ Rng::mix(layer * 16 + site + 1));
}

}  // namespace

Var rel_attention_block(const BoundEncoder& enc, std::size_t layer, const Var& x, const AttentionMask& mask,
                        const ForwardOptions& opts, AttentionTrace* trace) {
  const EncoderConfig& cfg = enc.config();
  const LayerSlots& s = enc.params().layer(layer);
  const std::size_t T = x.rows(), dh = cfg.head_dim();
  if (mask.length() != T) throw ContractError("attention mask length differs from sequence length");
  if (T > cfg.max_seq_len) throw LengthError("sequence of " + std::to_string(T) + " frames exceeds max_seq_len");

  ad::Tape& tape = *x.tape();
  const Var rel = tape.constant(relative_position_table(T, cfg.d_model, cfg.max_seq_len));

  const Var q = ad::matmul(x, enc.var(s.query));
  const Var k = ad::matmul(x, enc.var(s.key));
  const Var v = ad::matmul(x, enc.var(s.value));
  const Var r = ad::matmul(rel, enc.var(s.rel_proj));

  // Offset i-j of score (i, j) lives in column (i - j + T - 1) of the position term.
  std::vector<std::size_t> shift(T * T);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < T; ++j) shift[i * T + j] = i * (2 * T - 1) + (i + T - 1 - j);
  }
  const auto blocked = mask.blocked();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::size_t off = h * dh;
    const Var qh = ad::slice_cols(q, off, dh);
    const Var kh = ad::slice_cols(k, off, dh);
    const Var vh = ad::slice_cols(v, off, dh);
    const Var rh = ad::slice_cols(r, off, dh);
    const Var uh = ad::slice_cols(enc.var(s.content_bias), off, dh);
    const Var ph = ad::slice_cols(enc.var(s.position_bias), off, dh);

    const Var content = ad::matmul_nt(ad::add_row(qh, uh), kh);
    const Var position = ad::gather(ad::matmul_nt(ad::add_row(qh, ph), rh), {T, T}, shift);
    const Var scores = ad::scale(ad::add(content, position), inv_sqrt);
    const Var weights =
        ad::softmax(ad::masked_fill(scores, blocked, -std::numeric_limits<double>::infinity()));
    if (trace) {
      trace->scores.push_back(scores.value());
      trace->weights.push_back(weights.value());
    }
    heads.push_back(ad::matmul(weights, vh));
  }

  Var attn = ad::matmul(ad::concat_cols(heads), enc.var(s.output));
  attn = ad::dropout(attn, cfg.dropout, dropout_seed(opts, layer, 0), opts.train);
  const Var h1 = ad::layer_norm(ad::add(x, attn), enc.var(s.ln1_gamma), enc.var(s.ln1_beta), cfg.layer_norm_eps);

  Var ff = ad::gelu(ad::add_row(ad::matmul(h1, enc.var(s.ff_in)), enc.var(s.ff_in_bias)));
  ff = ad::add_row(ad::matmul(ff, enc.var(s.ff_out)), enc.var(s.ff_out_bias));
  ff = ad::dropout(ff, cfg.dropout, dropout_seed(opts, layer, 1), opts.train);
  return ad::layer_norm(ad::add(h1, ff), enc.var(s.ln2_gamma), enc.var(s.ln2_beta), cfg.layer_norm_eps);
}

Var encode(const BoundEncoder& enc, const corpus::PhonemePosteriorSequence& seq, const objective::MaskPlan& plan,
           const ForwardOptions& opts, EncoderTrace* trace) {
  const EncoderConfig& cfg = enc.config();
  const std::size_t T = seq.length();
  if (T > cfg.max_seq_len) {
    throw LengthError("utterance " + seq.utterance_id + " has " + std::to_string(T) + " frames, max_seq_len is " +
                      std::to_string(cfg.max_seq_len));
  }
  if (plan.length() != T) throw ContractError("encode: mask plan length differs from sequence length");

  ad::Tape& tape = enc.tape();
  const Var frames = tape.constant(seq.frames);
  Var x = embed_posteriors(enc.var(enc.params().embedding()), frames);
  x = apply_mask_plan(x, plan, enc.var(enc.params().mask_vector()));
  const AttentionMask mask = AttentionMask::from_plan(plan);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    AttentionTrace* layer_trace = nullptr;
    if (trace) layer_trace = &trace->layers.emplace_back();
    x = rel_attention_block(enc, l, x, mask, opts, layer_trace);
  }
  return x;
}

Var predict_phonemes(const Var& hidden, const Var& embedding) { return ad::matmul_nt(hidden, embedding); }

Var attentive_pool(const Var& hidden, const Var& query, std::span<const std::size_t> valid) {
  if (valid.empty()) throw ContractError("attentive_pool: no valid positions");
  const Var rows = ad::gather_rows(hidden, valid);
  const Var q = ad::reshape(query, {1, hidden.cols()});
  const Var scores = ad::scale(ad::matmul_nt(q, rows), 1.0 / std::sqrt(static_cast<double>(hidden.cols())));
  return ad::matmul(ad::softmax(scores), rows);
}

Var classify(const BoundEncoder& enc, const Var& hidden, std::span<const std::size_t> valid) {
  const EncoderParams& p = enc.params();
  const Var pooled = attentive_pool(hidden, enc.var(p.pool_query()), valid);
  return ad::add_row(ad::matmul_nt(pooled, enc.var(p.classifier_weight())), enc.var(p.classifier_bias()));
}

}  // namespace bertplm::model
