// Micro-benchmarks for the hot paths: the transport solve that runs on every
// unlabeled batch, the encoder forward/backward, and a full optimizer step.

#include <benchmark/benchmark.h>

#include <cstdint>

#include "suave/assign.hpp"
#include "suave/data.hpp"
#include "suave/matrix.hpp"
#include "suave/model.hpp"
#include "suave/objective.hpp"
#include "suave/rng.hpp"
#include "suave/tensor.hpp"
#include "suave/trainer.hpp"

namespace {

using namespace suave;

Matrix random_logits(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.data) {
    v = rng.uniform(-1.0, 1.0);
  }
  return m;
}

void BM_SinkhornFixed(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto classes = static_cast<std::size_t>(state.range(1));
  const Matrix logits = random_logits(batch, classes, 42);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sinkhorn_plan(logits, 0.05, 3));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_SinkhornFixed)->Args({256, 8})->Args({256, 64})->Args({1024, 64});

void BM_SinkhornConverged(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Matrix logits = random_logits(batch, 32, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sinkhorn_plan_converged(logits, 0.05, 1e-6, 1000));
  }
}
BENCHMARK(BM_SinkhornConverged)->Arg(64)->Arg(256);

EncoderParams bench_encoder(std::size_t dim, std::size_t classes) {
  EncoderConfig cfg;
  cfg.input_dim = dim;
  cfg.hidden_dims = {128, 128};
  cfg.proj_hidden = 128;
  cfg.proj_out = 32;
  cfg.classes = classes;
  return init_encoder(cfg, 5);
}

void BM_EncoderForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  EncoderParams params = bench_encoder(64, 16);
  const Matrix x = random_logits(batch, 64, 11);
  for (auto _ : state) {
    NoGradGuard guard;
    benchmark::DoNotOptimize(encoder_forward(params, x, ForwardMode::eval).logits);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_EncoderForward)->Arg(64)->Arg(256);

void BM_EncoderBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  EncoderParams params = bench_encoder(64, 16);
  const Matrix x = random_logits(batch, 64, 13);
  Rng rng(17);
  TargetBatch targets;
  targets.values = Matrix(batch, 16);
  for (std::size_t r = 0; r < batch; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 16; ++c) {
      targets.values.at(r, c) = rng.uniform(0.01, 1.0);
      sum += targets.values.at(r, c);
    }
    for (std::size_t c = 0; c < 16; ++c) {
      targets.values.at(r, c) /= sum;
    }
    targets.origin.push_back(TargetOrigin::pseudo);
  }
  for (auto _ : state) {
    const Tensor loss =
        soft_cross_entropy(encoder_forward(params, x, ForwardMode::train).logits, targets, 0.1);
    backward(loss);
    for_each_tensor(params, [](const std::string&, Tensor& t) { t.clear_grad(); });
    benchmark::DoNotOptimize(loss.scalar_value());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_EncoderBackward)->Arg(64)->Arg(256);

void BM_TrainStep(benchmark::State& state) {
  SyntheticSpec dspec;
  dspec.n = 2048;
  dspec.dim = 32;
  dspec.classes = 8;
  dspec.seed = 3;
  const Dataset data = make_synthetic(dspec);
  SplitSpec sspec;
  sspec.labeled_per_class = 16;
  const Split split = split_labels(data, sspec);

  EncoderConfig enc;
  enc.input_dim = 32;
  enc.hidden_dims = {64, 64};
  enc.proj_hidden = 64;
  enc.proj_out = 16;
  enc.classes = 8;

  TrainConfig cfg;
  cfg.epochs = 1000000;  // effectively unbounded for the benchmark loop
  cfg.unlabeled_batch = 128;
  cfg.labeled_batch = 32;
  cfg.aug.local_views = 2;
  cfg.probes_enabled = false;
  Trainer trainer(data, split, enc, cfg);

  for (auto _ : state) {
    benchmark::DoNotOptimize(trainer.train_step().loss_total);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(cfg.unlabeled_batch));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
