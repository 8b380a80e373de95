#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "bertplm/encoder.hpp"
#include "bertplm/posterior.hpp"
#include "bertplm/rng.hpp"

// Brute-force check that the partial permutation-LM expectation equals the
// masked-regression expectation over context subsets, for any conditional
// model that sees its context as an unordered set.
namespace bertplm::oracle {

/// Unordered subset of [0, 32). Construction order never matters.
class IndexSet {
 public:
  IndexSet() = default;
  IndexSet(std::initializer_list<std::size_t> items);
  explicit IndexSet(std::span<const std::size_t> items);
  static IndexSet from_mask(std::uint32_t mask);

  bool contains(std::size_t i) const { return (mask_ >> i) & 1U; }
  void insert(std::size_t i);
  std::size_t size() const;
  std::uint32_t mask() const { return mask_; }
  std::vector<std::size_t> elements() const;

  bool operator==(const IndexSet&) const = default;

 private:
  std::uint32_t mask_ = 0;
};

/// log p(x_target | x_context) for one fixed sequence of `length` items.
struct SetPredictor {
  std::size_t length = 0;
  std::function<double(IndexSet context, std::size_t target)> log_prob;
};

inline constexpr std::size_t kMaxEnumerationLength = 8;

/// (1/T!) sum_z sum_{t=c+1..T} log p(x_{z_t} | x_{z_<t}), enumerating all T!
/// orders. While enumerating, asserts that each (context set, target) pair
/// occurs exactly |S|! (T-|S|-1)! times (std::logic_error otherwise).
/// Requires 1 <= c <= T-1 and T <= 8.
double perm_plm_expectation(const SetPredictor& p, std::size_t c);

enum class SubsetWeighting {
  Exact,    // sum_k E_{|S|=T-k} [ (1/k) sum_{j not in S} log p(x_j | x_S) ]
  SumForm,  // (1/(T-c)) sum_k E_{|S|=T-k} [ sum_{j not in S} log p(x_j | x_S) ]
};

double subset_regression_expectation(const SetPredictor& p, std::size_t c, SubsetWeighting weighting);

struct TheoremReport {
  std::size_t T = 0;
  std::size_t c = 0;
  double lhs = 0.0;
  double rhs_exact = 0.0;
  double rhs_sum_form = 0.0;
  double dev_exact = 0.0;
  double dev_sum_form = 0.0;
  std::uint64_t permutations_enumerated = 0;
  std::uint64_t subsets_enumerated = 0;
};

/// Evaluates both sides for one predictor.
TheoremReport compare(const SetPredictor& p, std::size_t c);

using PredictorFactory = std::function<SetPredictor(std::size_t length, Rng& rng)>;

/// One report per trial; each trial draws a fresh predictor from `factory`
/// with its own RNG stream.
std::vector<TheoremReport> verify_theorem(const PredictorFactory& factory, std::size_t T, std::size_t c,
                                          std::size_t trials, const Rng& rng);

/// Context-blind predictor: every conditional is uniform over V symbols.
SetPredictor uniform_predictor(std::size_t length, std::size_t vocab_size);

/// Random token sequence with an arbitrary (random) conditional table per
/// (context set, target) pair.
SetPredictor random_set_predictor(std::size_t length, std::size_t vocab_size, Rng& rng);

/// Wraps the encoder: log p(x_j | x_S) runs encode() with targets = the
/// complement of S and reads log-softmax at j of the argmax phoneme of the
/// true posterior row j. The predictor keeps its own copy of `params` and
/// memoises results per context set.
SetPredictor make_frozen_predictor(const model::EncoderParams& params, const corpus::PhonemePosteriorSequence& seq);

}  // namespace bertplm::oracle
