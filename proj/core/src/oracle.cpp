#include "bertplm/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace bertplm::oracle {

IndexSet::IndexSet(std::initializer_list<std::size_t> items) {
  for (auto i : items) insert(i);
}

IndexSet::IndexSet(std::span<const std::size_t> items) {
  for (auto i : items) insert(i);
}

IndexSet IndexSet::from_mask(std::uint32_t mask) {
  IndexSet s;
  s.mask_ = mask;
  return s;
}

void IndexSet::insert(std::size_t i) {
  if (i >= 32) throw ContractError("IndexSet holds indices below 32");
  mask_ |= 1U << i;
}

std::size_t IndexSet::size() const { return static_cast<std::size_t>(std::popcount(mask_)); }

std::vector<std::size_t> IndexSet::elements() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < 32; ++i) {
    if (contains(i)) out.push_back(i);
  }
  return out;
}

namespace {

void check_args(const SetPredictor& p, std::size_t c) {
  if (p.length > kMaxEnumerationLength) {
    throw ContractError("oracle enumeration refused for T=" + std::to_string(p.length) + " (limit 8)");
  }
  if (p.length < 2 || c < 1 || c > p.length - 1) throw ContractError("cutting point c must lie in [1, T-1]");
}

std::uint64_t factorial(std::size_t n) {
  std::uint64_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) f *= i;
  return f;
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
  return factorial(n) / (factorial(k) * factorial(n - k));
}

// Lazily filled log p(x_j | x_S) table indexed by (mask, j).
class Memo {
 public:
  explicit Memo(const SetPredictor& p)
      : p_(p), table_((std::size_t{1} << p.length) * p.length, std::numeric_limits<double>::quiet_NaN()) {}
  double operator()(std::uint32_t mask, std::size_t j) {
    double& slot = table_[mask * p_.length + j];
    if (std::isnan(slot)) slot = p_.log_prob(IndexSet::from_mask(mask), j);
    return slot;
  }

 private:
  const SetPredictor& p_;
  std::vector<double> table_;
};

}  // namespace

double perm_plm_expectation(const SetPredictor& p, std::size_t c) {
  check_args(p, c);
  const std::size_t T = p.length;
  Memo lp(p);
  std::vector<std::uint64_t> multiplicity((std::size_t{1} << T) * T, 0);

  std::vector<std::size_t> z(T);
  std::iota(z.begin(), z.end(), 0);
  double total = 0.0;
  do {
    std::uint32_t prefix = 0;
    for (std::size_t pos = 0; pos < T; ++pos) {
      // pos is t-1 in 1-based factorization positions.
      if (pos >= c) {
        total += lp(prefix, z[pos]);
        ++multiplicity[prefix * T + z[pos]];
      }
      prefix |= 1U << z[pos];
    }
  } while (std::next_permutation(z.begin(), z.end()));

  for (std::uint32_t mask = 0; mask < (1U << T); ++mask) {
    const std::size_t s = static_cast<std::size_t>(std::popcount(mask));
    for (std::size_t j = 0; j < T; ++j) {
      const bool counted = s >= c && !((mask >> j) & 1U);
      const std::uint64_t expect = counted ? factorial(s) * factorial(T - s - 1) : 0;
      if (multiplicity[mask * T + j] != expect) {
        throw std::logic_error("permutation multiplicity mismatch for a (context, target) pair");
      }
    }
  }
  return total / static_cast<double>(factorial(T));
}

double subset_regression_expectation(const SetPredictor& p, std::size_t c, SubsetWeighting weighting) {
  check_args(p, c);
  const std::size_t T = p.length;
  Memo lp(p);
  double total = 0.0;
  for (std::size_t k = 1; k <= T - c; ++k) {
    const std::size_t context_size = T - k;
    double acc = 0.0;
    std::uint64_t count = 0;
    for (std::uint32_t mask = 0; mask < (1U << T); ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != context_size) continue;
      double inner = 0.0;
      for (std::size_t j = 0; j < T; ++j) {
        if (!((mask >> j) & 1U)) inner += lp(mask, j);
      }
      acc += weighting == SubsetWeighting::Exact ? inner / static_cast<double>(k) : inner;
      ++count;
    }
    total += acc / static_cast<double>(count);
  }
  if (weighting == SubsetWeighting::SumForm) total /= static_cast<double>(T - c);
  return total;
}

TheoremReport compare(const SetPredictor& p, std::size_t c) {
  TheoremReport r;
  r.T = p.length;
  r.c = c;
  r.lhs = perm_plm_expectation(p, c);
  r.rhs_exact = subset_regression_expectation(p, c, SubsetWeighting::Exact);
  r.rhs_sum_form = subset_regression_expectation(p, c, SubsetWeighting::SumForm);
  r.dev_exact = std::abs(r.lhs - r.rhs_exact);
  r.dev_sum_form = std::abs(r.lhs - r.rhs_sum_form);
  r.permutations_enumerated = factorial(p.length);
  for (std::size_t k = 1; k <= p.length - c; ++k) r.subsets_enumerated += binomial(p.length, p.length - k);
  return r;
}

std::vector<TheoremReport> verify_theorem(const PredictorFactory& factory, std::size_t T, std::size_t c,
                                          std::size_t trials, const Rng& rng) {
  if (trials < 1) throw ContractError("verify_theorem: trials must be >= 1");
  std::vector<TheoremReport> out;
  out.reserve(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    Rng trial_rng = rng.split("trial", i);
    out.push_back(compare(factory(T, trial_rng), c));
  }
  return out;
}

SetPredictor uniform_predictor(std::size_t length, std::size_t vocab_size) {
  const double lp = -std::log(static_cast<double>(vocab_size));
  return {length, [lp](IndexSet, std::size_t) { return lp; }};
}

SetPredictor random_set_predictor(std::size_t length, std::size_t vocab_size, Rng& rng) {
  std::vector<std::size_t> tokens(length);
  for (auto& t : tokens) t = rng.index(vocab_size);
  const Rng table = rng.split("conditionals");
  return {length, [tokens, table, vocab_size](IndexSet context, std::size_t target) {
            Rng cell = table.split(context.mask()).split(target);
            std::vector<double> logits(vocab_size);
            for (auto& l : logits) l = cell.normal(0.0, 2.0);
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double l : logits) z += std::exp(l - mx);
            return logits[tokens[target]] - mx - std::log(z);
          }};
}

SetPredictor make_frozen_predictor(const model::EncoderParams& params, const corpus::PhonemePosteriorSequence& seq) {
  const std::size_t T = seq.length();
  if (T > 31) throw ContractError("make_frozen_predictor: sequence too long for set enumeration");
  std::vector<std::size_t> truth(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto row = seq.frame(t);
    truth[t] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  // Rows of log-softmax outputs for every position, keyed by context mask.
  auto cache = std::make_shared<std::unordered_map<std::uint32_t, ad::Tensor>>();
  auto frozen = std::make_shared<const model::EncoderParams>(params);
  return {T, [frozen, seq, truth, cache](IndexSet context, std::size_t target) {
            auto it = cache->find(context.mask());
            if (it == cache->end()) {
              std::vector<std::size_t> targets;
              for (std::size_t t = 0; t < seq.length(); ++t) {
                if (!context.contains(t)) targets.push_back(t);
              }
              const auto plan = objective::MaskPlan(seq.length(), context.elements(), targets);
              ad::Tape tape(false);
              const model::BoundEncoder enc(tape, *frozen);
              const ad::Var hidden = model::encode(enc, seq, plan);
              const ad::Var logp = ad::log_softmax(model::predict_phonemes(hidden, enc.var(frozen->embedding())));
              it = cache->emplace(context.mask(), logp.value()).first;
            }
            return it->second.at(target, truth[target]);
          }};
}

}  // namespace bertplm::oracle
