#include <benchmark/benchmark.h>

#include "trajdiff/dataset.hpp"
#include "trajdiff/diffusion.hpp"
#include "trajdiff/metrics.hpp"
#include "trajdiff/tape.hpp"
#include "trajdiff/training.hpp"

using namespace trajdiff;
namespace ad = trajdiff::ad;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

// Forward and backward of sum(tanh(A B)).
void BM_MatmulGrad(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor({64, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var x = tape.leaf(a), w = tape.leaf(b);
    const auto g = ad::backward(ad::sum(ad::tanh(ad::matmul(x, w))));
    benchmark::DoNotOptimize(g[w]);
  }
}
BENCHMARK(BM_MatmulGrad)->Arg(16)->Arg(64)->Arg(128);

struct Fixture {
  NoiseSchedule sched = NoiseSchedule::linear(1000, 1e-4, 0.02);
  Dataset data = gen_dataset(DatasetSpec{}, 3);
  FeatureNet feat = FeatureNet::init(2, 1);
  Tensor batch;
  std::vector<int> labels;

  Fixture() {
    batch = Tensor({64, 2});
    for (std::size_t r = 0; r < 64; ++r) {
      batch.at(r, 0) = data.samples.at(r, 0);
      batch.at(r, 1) = data.samples.at(r, 1);
      labels.push_back(data.labels[r]);
    }
  }
  DenoiserSpec spec() const {
    DenoiserSpec s;
    s.num_labels = 8;
    s.hidden = 64;
    s.prediction = PredictionMode::kEpsilon;
    return s;
  }
};

void BM_E2eStep(benchmark::State& state) {
  Fixture f;
  TrainConfig cfg;
  cfg.nfe = static_cast<int>(state.range(0));
  TrainState st = TrainState::create(Denoiser::init(f.spec(), 4), 5);
  for (auto _ : state) benchmark::DoNotOptimize(train_step_e2e(st, f.batch, f.labels, f.sched, cfg, f.feat).loss);
}
BENCHMARK(BM_E2eStep)->Arg(1)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_StepwiseStep(benchmark::State& state) {
  Fixture f;
  TrainConfig cfg;
  cfg.mode = TrainMode::kStepwise;
  TrainState st = TrainState::create(Denoiser::init(f.spec(), 4), 5);
  for (auto _ : state) benchmark::DoNotOptimize(train_step_stepwise(st, f.batch, f.labels, f.sched, cfg).loss);
}
BENCHMARK(BM_StepwiseStep)->Unit(benchmark::kMillisecond);

void BM_Frechet(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor({n, 2}, 1), b = random_tensor({n, 2}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(a, b));
}
BENCHMARK(BM_Frechet)->Arg(2000)->Arg(8000);

void BM_Mmd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor({n, 2}, 1), b = random_tensor({n, 2}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(mmd_rbf(a, b, 1.0));
}
BENCHMARK(BM_Mmd)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
