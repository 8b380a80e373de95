#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "bertplm/posterior.hpp"
#include "bertplm/rng.hpp"
#include "bertplm/tensor.hpp"
#include "bertplm/vocab.hpp"

namespace bertplm::corpus {

/// A phoneme-token realization of one intent. SIL tokens inside a template
/// mark word gaps and expand to a SIL run of random length.
struct IntentTemplate {
  std::size_t class_id = 0;
  std::vector<std::size_t> tokens;
};

/// Mock acoustic channel: expands templates into frame-level posteriors.
///
/// Each non-SIL token lasts [min_frames, max_frames] frames; each SIL token
/// becomes [sil_min, sil_max] frames and the utterance is padded on both ends
/// with [boundary_sil_min, boundary_sil_max] SIL frames. A frame whose true
/// phoneme is p is drawn from Dirichlet(sharpness * confusion[p]); an
/// infinite sharpness yields confusion[p] itself.
struct SynthGrammar {
  PhonemeVocab vocab{{"SIL", "A"}};
  std::vector<std::string> class_names;
  std::vector<IntentTemplate> templates;
  std::size_t min_frames = 2;
  std::size_t max_frames = 4;
  std::size_t sil_min = 0;
  std::size_t sil_max = 3;
  std::size_t boundary_sil_min = 1;
  std::size_t boundary_sil_max = 4;
  ad::Tensor confusion;
  double sharpness = 20.0;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
  double frame_ms = kDefaultFrameMs;

  std::size_t num_classes() const { return class_names.size(); }
  /// Throws DataError when an invariant is broken.
  void validate() const;
};

/// V x V identity; every frame becomes one-hot at its true phoneme as sharpness grows.
ad::Tensor identity_confusion(std::size_t vocab_size);

/// Five-intent smart-home command grammar over an 18-symbol vocabulary.
SynthGrammar default_grammar();
/// Two classes, each a single distinct phoneme; linearly separable.
SynthGrammar separable_grammar();
/// Lookup by name: "default" or "separable".
SynthGrammar grammar_by_name(std::string_view name);

/// Throws DataError after 10 attempts if the sequence cannot fit max_seq_len
/// (each retry halves the duration ranges). When `alignment` is given it
/// receives the true phoneme of every frame.
LabeledUtterance generate_utterance(const SynthGrammar& grammar, std::size_t class_id, Rng& rng,
                                    std::string utterance_id = {}, std::vector<std::size_t>* alignment = nullptr);

/// Unstructured posteriors: every row is an independent Dirichlet(alpha, ..., alpha)
/// draw. For property tests that need arbitrary valid input.
PhonemePosteriorSequence random_posterior_sequence(std::size_t length, std::size_t vocab_size, double alpha, Rng& rng,
                                                   std::string utterance_id = "random");

/// Balanced corpus: utterance i has class i mod C and its own RNG stream.
std::vector<LabeledUtterance> generate_corpus(const SynthGrammar& grammar, std::size_t count,
                                              std::uint64_t seed, std::string_view id_prefix = "utt");

}  // namespace bertplm::corpus
