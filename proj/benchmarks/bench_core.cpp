#include <benchmark/benchmark.h>

#include "tsfm/autograd.hpp"
#include "tsfm/corpus.hpp"
#include "tsfm/lime.hpp"
#include "tsfm/model.hpp"
#include "tsfm/rng.hpp"
#include "tsfm/training.hpp"

namespace {

tsfm::Tensor random_tensor(std::vector<int64_t> shape, tsfm::Rng& rng) {
  tsfm::Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0);
  tsfm::Rng rng(1);
  const tsfm::Tensor a = random_tensor({n, n}, rng);
  const tsfm::Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    tsfm::Tensor c({n, n});
    tsfm::detail::mm_acc(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

void BM_DecoderForward(benchmark::State& state) {
  tsfm::TimerConfig cfg;
  tsfm::TimerModel model(cfg, 3);
  tsfm::Rng rng(2);
  const tsfm::Tensor tokens = random_tensor({state.range(0), cfg.token_len}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward_tokens(tokens).data());
  }
}
BENCHMARK(BM_DecoderForward)->Arg(4)->Arg(8)->Arg(16);

void BM_TrainStep(benchmark::State& state) {
  tsfm::TimerConfig cfg;
  tsfm::TimerModel model(cfg, 3);
  tsfm::Rng rng(4);
  std::vector<double> series(120);
  for (size_t i = 0; i < series.size(); ++i)
    series[i] = 1.0 - 0.001 * static_cast<double>(i) + 0.001 * rng.normal();
  tsfm::TrainConfig tc;
  for (auto _ : state) {
    tsfm::Tape tape;
    tsfm::ModelGraph graph(tape, model, true);
    auto parts = tsfm::joint_loss(graph, {std::span<const double>(series)}, {}, tc, nullptr);
    tape.backward(parts.total);
    benchmark::DoNotOptimize(tape.node_count());
  }
}
BENCHMARK(BM_TrainStep);

void BM_LimeWindow(benchmark::State& state) {
  std::vector<double> lookback(96);
  for (size_t i = 0; i < lookback.size(); ++i) lookback[i] = 1.0 - 0.002 * static_cast<double>(i);
  const tsfm::Forecaster fc = tsfm::drift_forecaster();
  tsfm::LimeConfig cfg;
  cfg.n_perturb = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsfm::lime_explain_window(fc, lookback, 24, cfg).data());
  }
}
BENCHMARK(BM_LimeWindow)->Arg(128)->Arg(512);

void BM_SyntheticCorpus(benchmark::State& state) {
  tsfm::SyntheticConfig cfg;
  cfg.n_cells = 4;
  cfg.cycles_per_cell = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsfm::generate_synthetic(cfg).total_points());
  }
}
BENCHMARK(BM_SyntheticCorpus)->Arg(300)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
