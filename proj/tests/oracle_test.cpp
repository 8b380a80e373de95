#include <gtest/gtest.h>

#include <cmath>
#include <unordered_map>

#include "bertplm/objective.hpp"
#include "bertplm/oracle.hpp"
#include "bertplm/synth.hpp"

using namespace bertplm;
using namespace bertplm::oracle;

namespace {

double factorial(std::size_t n) {
  double f = 1.0;
  for (std::size_t i = 2; i <= n; ++i) f *= static_cast<double>(i);
  return f;
}

// Independent route to the permutation expectation: A(S) is the sum, over all
// orderings of the remaining items, of the scored terms after prefix set S.
double prefix_recursion(const SetPredictor& p, std::size_t c) {
  const std::size_t T = p.length;
  std::unordered_map<std::uint32_t, double> memo;
  std::function<double(std::uint32_t)> a = [&](std::uint32_t s) -> double {
    if (auto it = memo.find(s); it != memo.end()) return it->second;
    const std::size_t used = static_cast<std::size_t>(__builtin_popcount(s));
    if (used == T) return 0.0;
    const double completions = factorial(T - used - 1);
    double total = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      if (s >> j & 1U) continue;
      if (used >= c) total += completions * p.log_prob(IndexSet::from_mask(s), j);
      total += a(s | (1U << j));
    }
    memo[s] = total;
    return total;
  };
  return a(0) / factorial(T);
}

}  // namespace

TEST(IndexSet, OrderIndependent) {
  EXPECT_EQ(IndexSet({3, 0, 5}), IndexSet({5, 3, 0}));
  IndexSet s;
  s.insert(2);
  s.insert(2);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.elements(), (std::vector<std::size_t>{2}));
  EXPECT_THROW(s.insert(32), ContractError);
}

TEST(Theorem, UniformPredictorClosedForms) {
  const auto p = uniform_predictor(3, 4);
  const auto r = compare(p, 1);
  EXPECT_NEAR(r.lhs, -2.0 * std::log(4.0), 1e-12);
  EXPECT_NEAR(r.rhs_exact, -2.0 * std::log(4.0), 1e-12);
  EXPECT_NEAR(r.rhs_sum_form, -1.5 * std::log(4.0), 1e-12);
  EXPECT_EQ(r.permutations_enumerated, 6u);
}

TEST(Theorem, LastStepOnlyMatchesHandFormula) {
  // c = T-1: one scored term per order, the last item given the other two.
  Rng rng(5);
  const auto p = random_set_predictor(3, 4, rng);
  double hand = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    IndexSet rest;
    for (std::size_t i = 0; i < 3; ++i)
      if (i != j) rest.insert(i);
    hand += p.log_prob(rest, j) / 3.0;
  }
  const auto r = compare(p, 2);
  EXPECT_NEAR(r.lhs, hand, 1e-14);
  EXPECT_NEAR(r.rhs_exact, hand, 1e-14);
  EXPECT_NEAR(r.rhs_sum_form, r.rhs_exact, 1e-14);
}

TEST(Theorem, EnumerationMatchesPrefixRecursion) {
  for (std::size_t T : {3u, 4u, 5u}) {
    for (std::size_t c = 1; c < T; ++c) {
      Rng rng = Rng(11).split(T * 10 + c);
      const auto p = random_set_predictor(T, 5, rng);
      EXPECT_NEAR(perm_plm_expectation(p, c), prefix_recursion(p, c), 1e-12) << "T=" << T << " c=" << c;
    }
  }
}

TEST(Theorem, ExactWeightingHoldsForRandomTables) {
  const auto reports = verify_theorem(
      [](std::size_t T, Rng& rng) { return random_set_predictor(T, 6, rng); }, 5, 2, 5, Rng(3));
  ASSERT_EQ(reports.size(), 5u);
  for (const auto& r : reports) {
    EXPECT_LE(r.dev_exact, 1e-10);
    EXPECT_EQ(r.permutations_enumerated, 120u);
  }
}

TEST(Theorem, RefusesOversizedOrDegenerateInput) {
  EXPECT_THROW(perm_plm_expectation(uniform_predictor(9, 3), 2), ContractError);
  EXPECT_THROW(perm_plm_expectation(uniform_predictor(4, 3), 0), ContractError);
  EXPECT_THROW(perm_plm_expectation(uniform_predictor(4, 3), 4), ContractError);
}

TEST(FrozenPredictor, MatchesDirectForwardPass) {
  model::EncoderConfig cfg;
  cfg.layers = 1;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.heads = 2;
  cfg.vocab_size = 5;
  cfg.dropout = 0.0;
  cfg.init_std = 0.3;
  Rng rng(7);
  const auto params = model::EncoderParams::initialize(cfg, rng);
  const auto seq = corpus::random_posterior_sequence(2, 5, 1.0, rng);
  const auto p = make_frozen_predictor(params, seq);

  ad::Tape tape(false);
  const model::BoundEncoder enc(tape, params);
  const auto plan = objective::MaskPlan::from_targets(2, {1});
  const auto h = model::encode(enc, seq, plan);
  const ad::Tensor lp = ad::log_softmax(model::predict_phonemes(h, enc.var(params.embedding()))).value();
  const auto row = seq.frame(1);
  const std::size_t best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  EXPECT_EQ(p.log_prob(IndexSet({0}), 1), lp.at(1, best));
}

TEST(FrozenPredictor, SatisfiesTheoremExactly) {
  model::EncoderConfig cfg;
  cfg.layers = 1;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.heads = 2;
  cfg.vocab_size = 5;
  cfg.dropout = 0.0;
  cfg.init_std = 0.3;
  Rng rng(8);
  const auto params = model::EncoderParams::initialize(cfg, rng);
  const auto seq = corpus::random_posterior_sequence(4, 5, 1.0, rng);
  const auto r = compare(make_frozen_predictor(params, seq), 2);
  EXPECT_LE(r.dev_exact, 1e-9);
}
