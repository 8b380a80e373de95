#include <benchmark/benchmark.h>

#include "bertplm/encoder.hpp"
#include "bertplm/objective.hpp"
#include "bertplm/synth.hpp"

using namespace bertplm;

namespace {

ad::Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return ad::Tensor({r, c}, std::move(v));
}

void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) {
    ad::Tape tape(false);
    benchmark::DoNotOptimize(ad::matmul(tape.constant(a), tape.constant(b)).value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(128)->Arg(256);

struct EncoderFixture {
  model::EncoderParams params;
  corpus::PhonemePosteriorSequence seq;
  objective::MaskPlan plan;
};

EncoderFixture make_fixture(std::size_t T) {
  Rng rng(2);
  const auto g = corpus::default_grammar();
  auto cfg = model::EncoderConfig::tiny(g.vocab.size());
  cfg.max_seq_len = std::max<std::size_t>(cfg.max_seq_len, T);
  auto params = model::EncoderParams::initialize(cfg, rng);
  auto seq = corpus::random_posterior_sequence(T, g.vocab.size(), 1.0, rng);
  auto plan = objective::sample_mask_plan(seq, g.vocab.sil_index(), 0.15, 0.5, rng);
  return {std::move(params), std::move(seq), std::move(plan)};
}

void bm_encoder_forward(benchmark::State& state) {
  const auto f = make_fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    ad::Tape tape(false);
    const model::BoundEncoder enc(tape, f.params);
    benchmark::DoNotOptimize(objective::bert_plm_loss(enc, f.seq, f.plan).breakdown.plm_loss);
  }
}
BENCHMARK(bm_encoder_forward)->Arg(40)->Arg(160)->Unit(benchmark::kMicrosecond);

void bm_encoder_forward_backward(benchmark::State& state) {
  const auto f = make_fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    ad::Tape tape;
    const model::BoundEncoder enc(tape, f.params);
    const auto loss = objective::bert_plm_loss(enc, f.seq, f.plan);
    benchmark::DoNotOptimize(tape.backward(loss.total));
  }
}
BENCHMARK(bm_encoder_forward_backward)->Arg(40)->Arg(160)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
