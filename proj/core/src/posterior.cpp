#include "bertplm/posterior.hpp"

#include <cmath>
#include <sstream>

namespace bertplm::corpus {

std::vector<Violation> validate_sequence(const PhonemePosteriorSequence& seq, std::size_t max_seq_len) {
  std::vector<Violation> out;
  if (seq.frames.rank() != 2) {
    out.push_back({0, "shape", "frames must be a T x V matrix, got " + ad::to_string(seq.frames.dims())});
    return out;
  }
  const std::size_t T = seq.length();
  if (T < 1 || T > max_seq_len) {
    out.push_back({0, "length", "T=" + std::to_string(T) + " outside [1, " + std::to_string(max_seq_len) + "]"});
  }
  for (std::size_t t = 0; t < T; ++t) {
    const auto row = seq.frame(t);
    double sum = 0.0;
    bool negative = false, finite = true;
    for (double v : row) {
      if (!std::isfinite(v)) finite = false;
      if (v < 0.0) negative = true;
      sum += v;
    }
    if (!finite) {
      out.push_back({t, "non-finite", "row contains NaN or Inf"});
      continue;
    }
    if (negative) out.push_back({t, "negativity", "row has a negative entry"});
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      std::ostringstream os;
      os << "row sums to " << sum;
      out.push_back({t, "row-sum", os.str()});
    }
  }
  return out;
}

bool is_major_sil(std::span<const double> frame, std::size_t sil_index, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ContractError("SIL threshold must lie in (0, 1)");
  if (sil_index >= frame.size()) throw ShapeError("SIL index outside the frame");
  return frame[sil_index] > tau;
}

std::size_t count_eligible(const PhonemePosteriorSequence& seq, std::size_t sil_index, double tau) {
  std::size_t n = 0;
  for (std::size_t t = 0; t < seq.length(); ++t) n += is_major_sil(seq.frame(t), sil_index, tau) ? 0 : 1;
  return n;
}

}  // namespace bertplm::corpus
