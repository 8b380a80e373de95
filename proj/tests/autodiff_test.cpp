#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "bertplm/grad_check.hpp"
#include "bertplm/ops.hpp"
#include "bertplm/rng.hpp"

using namespace bertplm;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(ad::Dims dims, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(dims));
  for (auto& x : t.mutable_data()) x = rng.normal(0.0, scale);
  return t;
}

// Scalar triple loop, independent of the Eigen-backed kernel.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * n + j] += a.at(i, p) * b.at(p, j);
  return Tensor({m, n}, out);
}

}  // namespace

TEST(Tensor, CopiesDetachOnWrite) {
  Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  Tensor b = a;
  b.mutable_data()[0] = 9.0;
  EXPECT_EQ(a.at(0, 0), 1.0);
  EXPECT_EQ(b.at(0, 0), 9.0);
}

TEST(Tensor, CheckedModeRejectsNonFinite) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(Tensor({2}, {1.0, nan}), ContractError);
  ad::set_checked_mode(false);
  EXPECT_NO_THROW(Tensor({2}, {1.0, nan}));
  ad::set_checked_mode(true);
}

TEST(Tensor, ShapeMismatchOnConstruction) { EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), ShapeError); }

TEST(Matmul, IdentityAndProjector) {
  Tape tape;
  const Var m = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  const Var eye = tape.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  EXPECT_EQ(ad::max_abs_diff(ad::matmul(eye, m).value(), m.value()), 0.0);

  const Var p = tape.constant(Tensor::from_rows({{1, 0}, {0, 0}}));
  const Var b = tape.constant(Tensor::from_rows({{5, 6}, {7, 8}}));
  EXPECT_EQ(ad::max_abs_diff(ad::matmul(p, b).value(), Tensor::from_rows({{5, 6}, {0, 0}})), 0.0);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(3);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  Tape tape;
  const Tensor got = ad::matmul(tape.constant(a), tape.constant(b)).value();
  EXPECT_LE(ad::max_abs_diff(got, naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, TransposedVariantMatchesTripleLoop) {
  Rng rng(4);
  const Tensor a = random_tensor({5, 3}, rng), b = random_tensor({4, 3}, rng);
  std::vector<double> bt(12);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) bt[j * 4 + i] = b.at(i, j);
  Tape tape;
  const Tensor got = ad::matmul_nt(tape.constant(a), tape.constant(b)).value();
  EXPECT_LE(ad::max_abs_diff(got, naive_matmul(a, Tensor({3, 4}, bt))), 1e-12);
}

TEST(Matmul, DimensionMismatchIsShapeError) {
  Tape tape;
  EXPECT_THROW(ad::matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3}))), ShapeError);
}

TEST(Softmax, UniformRow) {
  Tape tape;
  const Tensor s = ad::softmax(tape.constant(Tensor::vector({0, 0, 0}))).value();
  for (double p : s.data()) EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  Tape tape;
  const Tensor s = ad::softmax(tape.constant(Tensor::vector({1000, 0, 0}))).value();
  EXPECT_NEAR(s[0], 1.0, 1e-12);
  EXPECT_NEAR(s[1], 0.0, 1e-12);
  EXPECT_NEAR(s[2], 0.0, 1e-12);
  EXPECT_TRUE(s.all_finite());
}

TEST(Softmax, MatchesDirectFormula) {
  Tape tape;
  const Tensor s = ad::softmax(tape.constant(Tensor::vector({1, 2, 3}))).value();
  const double z = std::exp(-2.0) + std::exp(-1.0) + 1.0;
  EXPECT_NEAR(s[0], std::exp(-2.0) / z, 1e-15);
  EXPECT_NEAR(s[1], std::exp(-1.0) / z, 1e-15);
  EXPECT_NEAR(s[2], 1.0 / z, 1e-15);
}

TEST(Softmax, NegativeInfinityGetsZeroMass) {
  Tape tape;
  const double inf = std::numeric_limits<double>::infinity();
  const Tensor s = ad::softmax(tape.constant(Tensor::unchecked({3}, {0.0, -inf, 0.0}))).value();
  EXPECT_EQ(s[1], 0.0);
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_THROW(ad::softmax(tape.constant(Tensor::unchecked({2}, {-inf, -inf}))), ContractError);
}

TEST(LayerNorm, ConstantRowNormalizesToZero) {
  Tape tape;
  const Var x = tape.constant(Tensor::from_rows({{3, 3, 3, 3}}));
  const Var y = ad::layer_norm(x, tape.constant(Tensor::filled({4}, 1.0)), tape.constant(Tensor({4})));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, ZeroGainGivesBeta) {
  Rng rng(5);
  Tape tape;
  const Tensor beta = Tensor::vector({0.1, -0.2, 0.3});
  const Var y = ad::layer_norm(tape.constant(random_tensor({2, 3}, rng)), tape.constant(Tensor({3})),
                               tape.constant(beta));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y.value().at(r, c), beta[c]);
}

TEST(LayerNorm, RandomRowHasZeroMeanUnitVariance) {
  Rng rng(6);
  const std::size_t d = 32;
  const double eps = 1e-5;
  const Tensor x = random_tensor({1, d}, rng, 3.0);
  Tape tape;
  const Tensor y = ad::layer_norm(tape.constant(x), tape.constant(Tensor::filled({d}, 1.0)),
                                  tape.constant(Tensor({d})), eps)
                       .value();
  double mean = 0.0, var = 0.0, xmean = 0.0, xvar = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    mean += y[i] / d;
    xmean += x[i] / d;
  }
  for (std::size_t i = 0; i < d; ++i) {
    var += (y[i] - mean) * (y[i] - mean) / d;
    xvar += (x[i] - xmean) * (x[i] - xmean) / d;
  }
  EXPECT_LE(std::abs(mean), 1e-10);
  // Normalising by sqrt(var + eps) shrinks the variance by var / (var + eps).
  EXPECT_NEAR(var, xvar / (xvar + eps), 1e-6);
  EXPECT_NEAR(var, 1.0, 1e-5);
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  const Var x = tape.parameter(Tensor::from_rows({{1, -2, 3}, {4, 5, -6}}));
  const Tensor g = tape.backward(ad::sum(x))[x];
  for (double v : g.data()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, SelfDotGivesTwiceInput) {
  Tape tape;
  const Tensor xv = Tensor::vector({0.5, -1.5, 2.0});
  const Var x = tape.parameter(xv);
  const auto g = tape.backward(ad::sum(ad::mul(x, x)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g[x][i], 2.0 * xv[i]);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape tape;
  const Var x = tape.parameter(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Backward, NonRecordingTapeRefuses) {
  Tape tape(false);
  const Var x = tape.parameter(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(ad::sum(x)), ContractError);
}

TEST(Backward, ConstantsGetNoGradient) {
  Tape tape;
  const Var c = tape.constant(Tensor::vector({1, 2}));
  const Var x = tape.parameter(Tensor::vector({3, 4}));
  const auto g = tape.backward(ad::sum(ad::mul(c, x)));
  EXPECT_FALSE(g.has(c));
  EXPECT_DOUBLE_EQ(g[x][1], 2.0);
}

TEST(Backward, TwoLayerMlpMatchesFiniteDifferences) {
  Rng rng(7);
  const Tensor input = random_tensor({4, 3}, rng);
  const std::vector<Tensor> params = {random_tensor({3, 5}, rng), random_tensor({5}, rng),
                                      random_tensor({5, 2}, rng)};
  const auto f = [&](Tape& tape, std::span<const Var> p) {
    const Var h = ad::gelu(ad::add_row(ad::matmul(tape.constant(input), p[0]), p[1]));
    return ad::mean(ad::mul(ad::matmul(h, p[2]), ad::matmul(h, p[2])));
  };
  EXPECT_LE(ad::finite_diff_check(f, params).max_rel_error, 1e-7);
}

TEST(GradCheck, LinearFunctionIsExact) {
  Rng rng(8);
  const Tensor x = random_tensor({6}, rng);
  const std::vector<Tensor> w = {random_tensor({6}, rng)};
  const auto f = [&](Tape& tape, std::span<const Var> p) { return ad::sum(ad::mul(p[0], tape.constant(x))); };
  const auto r = ad::finite_diff_check(f, w);
  EXPECT_LE(r.max_rel_error, 1e-10);
  EXPECT_EQ(r.entries_checked, 6u);
}

TEST(GradCheck, SoftmaxCrossEntropyToy) {
  Rng rng(9);
  const Tensor target = Tensor::from_rows({{0.2, 0.5, 0.3}, {0.0, 1.0, 0.0}});
  const std::vector<Tensor> logits = {random_tensor({2, 3}, rng)};
  const auto f = [&](Tape& tape, std::span<const Var> p) {
    return ad::scale(ad::sum(ad::mul(tape.constant(target), ad::log_softmax(p[0]))), -0.5);
  };
  EXPECT_LE(ad::finite_diff_check(f, logits, 1e-5).max_rel_error, 1e-6);
}

TEST(GradCheck, DetectsAWrongBackward) {
  // x^2 with a backward that reports x instead of 2x.
  const std::vector<Tensor> x = {Tensor::vector({0.7, -1.3})};
  const auto f = [](Tape& tape, std::span<const Var> p) {
    const Tensor& v = p[0].value();
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
    const Var y = tape.push("bad_square", Tensor(v.dims(), sq), {p[0].id()},
                            [v](std::span<const double> g, ad::GradSink& sink) {
                              auto gx = sink.grad(0);
                              for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * v[i];
                            });
    return ad::sum(y);
  };
  EXPECT_GT(ad::finite_diff_check(f, x).max_rel_error, 0.1);
}

TEST(GradCheck, EpsOutsideRangeIsRejected) {
  const std::vector<Tensor> x = {Tensor::vector({1.0})};
  const auto f = [](Tape&, std::span<const Var> p) { return ad::sum(p[0]); };
  EXPECT_THROW(ad::finite_diff_check(f, x, 1e-2), ContractError);
  EXPECT_THROW(ad::finite_diff_check(f, x, 1e-9), ContractError);
}

// Every primitive through one finite-difference check each.
TEST(GradCheck, EachPrimitive) {
  Rng rng(10);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng), c = random_tensor({3, 4}, rng);
  const Tensor row = random_tensor({4}, rng), pos = Tensor({3, 4}, std::vector<double>(12, 1.5));
  const std::vector<std::uint8_t> mask = {0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0};
  struct Case {
    const char* name;
    ad::ScalarFn f;
    std::vector<Tensor> params;
  };
  const std::vector<Case> cases = {
      {"matmul", [](Tape&, std::span<const Var> p) { return ad::sum(ad::matmul(p[0], p[1])); }, {a, b}},
      {"matmul_nt", [](Tape&, std::span<const Var> p) { return ad::sum(ad::mul(ad::matmul_nt(p[0], p[1]), ad::matmul_nt(p[0], p[1]))); }, {a, c}},
      {"add_sub_mul", [](Tape&, std::span<const Var> p) { return ad::sum(ad::mul(ad::add(p[0], p[1]), ad::sub(p[0], p[1]))); }, {a, c}},
      {"add_row", [](Tape&, std::span<const Var> p) { return ad::sum(ad::mul(ad::add_row(p[0], p[1]), p[0])); }, {a, row}},
      {"gelu", [](Tape&, std::span<const Var> p) { return ad::sum(ad::gelu(p[0])); }, {a}},
      {"log", [&](Tape&, std::span<const Var> p) { return ad::sum(ad::log(ad::add(p[0], p[0]))); }, {pos}},
      {"softmax", [](Tape&, std::span<const Var> p) { return ad::sum(ad::mul(ad::softmax(p[0]), p[1])); }, {a, c}},
      {"log_softmax", [](Tape&, std::span<const Var> p) { return ad::sum(ad::mul(ad::log_softmax(p[0]), p[1])); }, {a, c}},
      {"masked_softmax", [&](Tape&, std::span<const Var> p) { return ad::sum(ad::mul(ad::softmax(ad::masked_fill(p[0], mask, -std::numeric_limits<double>::infinity())), p[1])); }, {a, c}},
      {"layer_norm", [](Tape&, std::span<const Var> p) { return ad::sum(ad::mul(ad::layer_norm(p[0], p[1], p[2]), p[3])); }, {a, row, row, c}},
      {"gather_rows", [](Tape&, std::span<const Var> p) { const std::vector<std::size_t> r = {2, 0, 2}; return ad::sum(ad::mul(ad::gather_rows(p[0], r), p[1])); }, {a, c}},
      {"concat_slice", [](Tape&, std::span<const Var> p) { const std::vector<Var> parts = {ad::slice_cols(p[0], 1, 2), p[1]}; const Var cat = ad::concat_cols(parts); return ad::sum(ad::mul(cat, cat)); }, {a, c}},
      {"concat_rows", [](Tape&, std::span<const Var> p) { const Var r = ad::concat_rows(p[0], p[1]); return ad::sum(ad::mul(r, r)); }, {a, row}},
      {"reshape_mean", [](Tape&, std::span<const Var> p) { const Var r = ad::reshape(p[0], {4, 3}); return ad::mean(ad::mul(r, r)); }, {a}},
      {"scale", [](Tape&, std::span<const Var> p) { return ad::sum(ad::scale(ad::mul(p[0], p[0]), -0.3)); }, {a}},
      {"dropout", [](Tape&, std::span<const Var> p) { const Var d = ad::dropout(p[0], 0.4, 77, true); return ad::sum(ad::mul(d, d)); }, {a}},
  };
  for (const auto& c : cases) {
    EXPECT_LE(ad::finite_diff_check(c.f, c.params).max_rel_error, 1e-6) << c.name;
  }
}

TEST(Dropout, IdentityOutsideTrainingAndDeterministicInside) {
  Rng rng(11);
  const Tensor x = random_tensor({10, 10}, rng);
  Tape tape;
  const Var v = tape.constant(x);
  EXPECT_EQ(ad::max_abs_diff(ad::dropout(v, 0.5, 1, false).value(), x), 0.0);
  const Tensor d1 = ad::dropout(v, 0.5, 1, true).value();
  const Tensor d2 = ad::dropout(v, 0.5, 1, true).value();
  EXPECT_EQ(ad::max_abs_diff(d1, d2), 0.0);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (d1[i] == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(d1[i], 2.0 * x[i]);
    }
  }
  EXPECT_GT(zeros, 25u);
  EXPECT_LT(zeros, 75u);
}
