#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bertplm/tensor.hpp"

namespace bertplm::corpus {

inline constexpr std::size_t kDefaultMaxSeqLen = 320;
inline constexpr double kDefaultFrameMs = 30.0;
inline constexpr double kDefaultSilThreshold = 0.5;
inline constexpr double kRowSumTolerance = 1e-6;

/// T x V matrix of per-frame phoneme distributions.
struct PhonemePosteriorSequence {
  std::string utterance_id;
  ad::Tensor frames;
  double frame_ms = kDefaultFrameMs;

  std::size_t length() const { return frames.rows(); }
  std::size_t vocab_size() const { return frames.cols(); }
  std::span<const double> frame(std::size_t t) const { return frames.row(t); }
};

struct LabeledUtterance {
  PhonemePosteriorSequence sequence;
  std::size_t label = 0;
};

struct Violation {
  std::size_t frame = 0;
  std::string rule;  // "row-sum", "negativity", "non-finite", "shape", "length"
  std::string detail;
};

/// Empty iff every row is a distribution and 1 <= T <= max_seq_len.
std::vector<Violation> validate_sequence(const PhonemePosteriorSequence& seq,
                                         std::size_t max_seq_len = kDefaultMaxSeqLen);

/// Strict: frame[sil_index] > tau.
bool is_major_sil(std::span<const double> frame, std::size_t sil_index, double tau = kDefaultSilThreshold);

/// Number of frames that are not major SIL.
std::size_t count_eligible(const PhonemePosteriorSequence& seq, std::size_t sil_index,
                           double tau = kDefaultSilThreshold);

}  // namespace bertplm::corpus
