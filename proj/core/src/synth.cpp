#include "bertplm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace bertplm::corpus {

void SynthGrammar::validate() const {
  const std::size_t V = vocab.size();
  if (confusion.rank() != 2 || confusion.rows() != V || confusion.cols() != V) {
    throw DataError("confusion matrix must be " + std::to_string(V) + "x" + std::to_string(V));
  }
  for (std::size_t r = 0; r < V; ++r) {
    double s = 0.0;
    for (double v : confusion.row(r)) {
      if (v < 0.0) throw DataError("confusion matrix has a negative entry in row " + std::to_string(r));
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw DataError("confusion row " + std::to_string(r) + " does not sum to 1");
  }
  if (!(sharpness > 0.0)) throw DataError("sharpness must be positive");
  if (min_frames < 1 || max_frames < min_frames) throw DataError("bad phoneme duration range");
  if (sil_max < sil_min || boundary_sil_max < boundary_sil_min) throw DataError("bad SIL duration range");
  if (class_names.empty()) throw DataError("grammar has no classes");
  std::vector<bool> covered(class_names.size(), false);
  for (const auto& t : templates) {
    if (t.class_id >= class_names.size()) throw DataError("template refers to unknown class");
    if (t.tokens.empty()) throw DataError("empty template");
    for (auto tok : t.tokens) {
      if (tok >= V) throw DataError("template token outside the vocabulary");
    }
    covered[t.class_id] = true;
  }
  for (std::size_t c = 0; c < covered.size(); ++c) {
    if (!covered[c]) throw DataError("class " + class_names[c] + " has no template");
  }
}

ad::Tensor identity_confusion(std::size_t vocab_size) {
  ad::Tensor m({vocab_size, vocab_size});
  auto d = m.mutable_data();
  for (std::size_t i = 0; i < vocab_size; ++i) d[i * vocab_size + i] = 1.0;
  return m;
}

namespace {

// Phonemes sit on a ring; each is confused mostly with its two ring
// neighbours, slightly with everything else, and barely with SIL.
ad::Tensor ring_confusion(const PhonemeVocab& vocab, double diagonal, double neighbour, double sil) {
  const std::size_t V = vocab.size(), s = vocab.sil_index();
  std::vector<std::size_t> ring;
  for (std::size_t i = 0; i < V; ++i) {
    if (i != s) ring.push_back(i);
  }
  ad::Tensor m({V, V});
  auto d = m.mutable_data();
  const std::size_t n = ring.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t p = ring[k];
    const std::size_t prev = ring[(k + n - 1) % n], next = ring[(k + 1) % n];
    const double rest = (1.0 - diagonal - 2.0 * neighbour - sil) / static_cast<double>(V - 4);
    for (std::size_t v = 0; v < V; ++v) d[p * V + v] = rest;
    d[p * V + p] = diagonal;
    d[p * V + prev] = neighbour;
    d[p * V + next] = neighbour;
    d[p * V + s] = sil;
  }
  for (std::size_t v = 0; v < V; ++v) d[s * V + v] = 0.1 / static_cast<double>(V - 1);
  d[s * V + s] = 0.9;
  return m;
}

std::vector<std::size_t> spell(const PhonemeVocab& vocab, std::string_view phrase) {
  std::vector<std::size_t> out;
  std::istringstream is{std::string(phrase)};
  std::string sym;
  while (is >> sym) {
    const auto idx = vocab.index_of(sym);
    if (!idx) throw DataError("unknown phoneme '" + sym + "' in grammar");
    out.push_back(*idx);
  }
  return out;
}

}  // namespace

SynthGrammar default_grammar() {
  SynthGrammar g;
  g.vocab = PhonemeVocab({"SIL", "AA", "AE", "AH", "D", "EH", "F", "IH", "K", "L", "M", "N", "OW", "P",
                          "S", "T", "UW", "Z"});
  g.class_names = {"lights_on", "lights_off", "music_play", "music_stop", "volume_up"};

  const std::map<std::string_view, std::string_view> words = {
      {"turn", "T AH N"},  {"on", "AA N"},        {"off", "AA F"},       {"the", "D AH"},
      {"lights", "L AA T S"}, {"music", "M UW Z IH K"}, {"play", "P L EH"}, {"stop", "S T AA P"},
      {"up", "AH P"},      {"it", "IH T"},       {"please", "P L IH Z"}, {"lamp", "L AE M P"},
      {"song", "S OW N"},  {"louder", "L AE D AH"}};
  auto phrase = [&](std::string_view text) {
    std::vector<std::size_t> tokens;
    std::istringstream is{std::string(text)};
    std::string w;
    bool first = true;
    while (is >> w) {
      if (!first) tokens.push_back(g.vocab.sil_index());
      first = false;
      const auto spelled = spell(g.vocab, words.at(w));
      tokens.insert(tokens.end(), spelled.begin(), spelled.end());
    }
    return tokens;
  };
  const std::vector<std::pair<std::size_t, std::string_view>> templates = {
      {0, "turn on the lights"},  {0, "lights on"},         {0, "turn on the lamp"},   {0, "please turn the lights on"},
      {1, "turn off the lights"}, {1, "lights off"},        {1, "turn off the lamp"},  {1, "please turn the lights off"},
      {2, "play the music"},      {2, "turn on the music"}, {2, "play the song"},      {2, "please play it"},
      {3, "stop the music"},      {3, "turn off the music"}, {3, "stop the song"},     {3, "please stop it"},
      {4, "turn it up"},          {4, "turn the music up"}, {4, "louder please"},      {4, "play it louder"}};
  for (const auto& [cls, text] : templates) g.templates.push_back({cls, phrase(text)});

  g.min_frames = 2;
  g.max_frames = 4;
  g.sil_min = 0;
  g.sil_max = 3;
  g.boundary_sil_min = 1;
  g.boundary_sil_max = 4;
  g.confusion = ring_confusion(g.vocab, 0.70, 0.08, 0.03);
  g.sharpness = 20.0;
  g.validate();
  return g;
}

SynthGrammar separable_grammar() {
  SynthGrammar g;
  g.vocab = PhonemeVocab({"SIL", "A", "B", "C"});
  g.class_names = {"a", "b"};
  g.templates = {{0, {1}}, {1, {2}}};
  g.min_frames = 3;
  g.max_frames = 6;
  g.sil_min = 0;
  g.sil_max = 0;
  g.boundary_sil_min = 0;
  g.boundary_sil_max = 2;
  g.confusion = identity_confusion(g.vocab.size());
  g.sharpness = 50.0;
  g.validate();
  return g;
}

SynthGrammar grammar_by_name(std::string_view name) {
  if (name == "default") return default_grammar();
  if (name == "separable") return separable_grammar();
  throw DataError("unknown grammar '" + std::string(name) + "' (expected default or separable)");
}

namespace {

std::size_t draw_between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

void draw_frame(const SynthGrammar& g, std::size_t phoneme, Rng& rng, std::span<double> out) {
  const auto row = g.confusion.row(phoneme);
  if (std::isinf(g.sharpness)) {
    std::copy(row.begin(), row.end(), out.begin());
    return;
  }
  double total = 0.0;
  for (std::size_t v = 0; v < out.size(); ++v) {
    const double alpha = g.sharpness * row[v];
    out[v] = alpha > 0.0 ? rng.gamma(alpha) : 0.0;
    total += out[v];
  }
  if (!(total > 0.0)) {
    // Every gamma draw underflowed; fall back to the mode of the row.
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())] = 1.0;
    return;
  }
  for (auto& v : out) v /= total;
}

}  // namespace

PhonemePosteriorSequence random_posterior_sequence(std::size_t length, std::size_t vocab_size, double alpha, Rng& rng,
                                                   std::string utterance_id) {
  if (length == 0 || vocab_size < 2 || !(alpha > 0.0)) {
    throw ContractError("random_posterior_sequence: need length >= 1, V >= 2, alpha > 0");
  }
  std::vector<double> data(length * vocab_size);
  for (std::size_t t = 0; t < length; ++t) {
    double total = 0.0;
    for (std::size_t v = 0; v < vocab_size; ++v) total += data[t * vocab_size + v] = rng.gamma(alpha);
    if (!(total > 0.0)) {
      data[t * vocab_size + rng.index(vocab_size)] = total = 1.0;
    }
    for (std::size_t v = 0; v < vocab_size; ++v) data[t * vocab_size + v] /= total;
  }
  PhonemePosteriorSequence seq;
  seq.utterance_id = std::move(utterance_id);
  seq.frames = ad::Tensor({length, vocab_size}, std::move(data));
  return seq;
}

LabeledUtterance generate_utterance(const SynthGrammar& grammar, std::size_t class_id, Rng& rng,
                                    std::string utterance_id, std::vector<std::size_t>* alignment) {
  if (class_id >= grammar.num_classes()) {
    throw ContractError("generate_utterance: class " + std::to_string(class_id) + " not in grammar");
  }
  std::vector<const IntentTemplate*> candidates;
  for (const auto& t : grammar.templates) {
    if (t.class_id == class_id) candidates.push_back(&t);
  }
  const IntentTemplate& tmpl = *candidates[rng.index(candidates.size())];
  const std::size_t sil = grammar.vocab.sil_index();
  const std::size_t V = grammar.vocab.size();

  constexpr int kAttempts = 10;
  std::vector<std::size_t> truth;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    auto shrink = [attempt](std::size_t v, std::size_t floor) { return std::max(floor, v >> attempt); };
    const std::size_t p_lo = shrink(grammar.min_frames, 1), p_hi = shrink(grammar.max_frames, p_lo);
    const std::size_t s_lo = shrink(grammar.sil_min, 0), s_hi = shrink(grammar.sil_max, s_lo);
    const std::size_t b_lo = shrink(grammar.boundary_sil_min, 0), b_hi = shrink(grammar.boundary_sil_max, b_lo);
    truth.clear();
    truth.insert(truth.end(), draw_between(rng, b_lo, b_hi), sil);
    for (auto tok : tmpl.tokens) {
      const bool is_gap = tok == sil;
      truth.insert(truth.end(), is_gap ? draw_between(rng, s_lo, s_hi) : draw_between(rng, p_lo, p_hi), tok);
    }
    truth.insert(truth.end(), draw_between(rng, b_lo, b_hi), sil);
    if (!truth.empty() && truth.size() <= grammar.max_seq_len) break;
    if (attempt == kAttempts - 1) {
      throw DataError("generate_utterance: could not fit max_seq_len=" + std::to_string(grammar.max_seq_len) +
                      " after 10 attempts");
    }
  }

  const std::size_t T = truth.size();
  std::vector<double> frames(T * V);
  for (int attempt = 0;; ++attempt) {
    bool any_eligible = false;
    for (std::size_t t = 0; t < T; ++t) {
      std::span<double> row(frames.data() + t * V, V);
      draw_frame(grammar, truth[t], rng, row);
      any_eligible = any_eligible || !is_major_sil(row, sil);
    }
    if (any_eligible) break;
    if (attempt == kAttempts - 1) throw DataError("generate_utterance: every frame came out as major SIL");
  }

  LabeledUtterance u;
  u.sequence.utterance_id = std::move(utterance_id);
  u.sequence.frames = ad::Tensor({T, V}, std::move(frames));
  u.sequence.frame_ms = grammar.frame_ms;
  u.label = class_id;
  if (alignment) *alignment = std::move(truth);
  return u;
}

std::vector<LabeledUtterance> generate_corpus(const SynthGrammar& grammar, std::size_t count, std::uint64_t seed,
                                              std::string_view id_prefix) {
  grammar.validate();
  const Rng root = Rng(seed).split("corpus");
  std::vector<LabeledUtterance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = root.split(i);
    std::ostringstream id;
    id << id_prefix << '-' << i;
    out.push_back(generate_utterance(grammar, i % grammar.num_classes(), rng, id.str()));
  }
  return out;
}

}  // namespace bertplm::corpus
