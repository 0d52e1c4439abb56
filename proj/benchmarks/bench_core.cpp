#include <benchmark/benchmark.h>

#include "idbr/kmeans.hpp"
#include "idbr/memory.hpp"
#include "idbr/model.hpp"
#include "idbr/objectives.hpp"
#include "idbr/optimizer.hpp"

namespace {

using namespace idbr;

ModelConfig bench_model_config() {
  ModelConfig c;
  c.vocab_size = 4000;
  c.embed_dim = 64;
  c.hidden_dim = 128;
  c.encoder_dim = 128;
  c.feature_dim = 128;
  c.num_tasks = 5;
  c.num_classes = 33;
  c.max_positions = 258;
  c.init_seed = 1;
  return c;
}

std::vector<int> bench_tokens(size_t length, uint64_t seed) {
  Rng rng(seed);
  std::vector<int> tokens;
  for (size_t i = 0; i < length; ++i) {
    tokens.push_back(2 + static_cast<int>(rng.uniform_index(3998)));
  }
  return tokens;
}

Batch bench_batch(int sources, uint64_t seed) {
  Batch batch;
  Rng rng(seed);
  for (int i = 0; i < sources; ++i) {
    Example ex;
    ex.tokens = bench_tokens(24 + rng.uniform_index(40), seed + i);
    ex.label = static_cast<int>(rng.uniform_index(33));
    ex.task_id = static_cast<int>(rng.uniform_index(5));
    ex.id = static_cast<uint64_t>(i);
    batch.push_back(make_batch_item(ex, sample_split_index(rng, ex.tokens.size())));
  }
  return batch;
}

void BM_EncodeForward(benchmark::State& state) {
  const Model model(bench_model_config());
  const auto tokens = bench_tokens(64, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.encode(tokens));
  }
}
BENCHMARK(BM_EncodeForward);

void BM_TrainStep(benchmark::State& state) {
  const ModelConfig config = bench_model_config();
  Model model(config);
  const Batch batch = bench_batch(8, 5);
  AdamWConfig adam;
  adam.learning_rate = 1e-3;
  AdamW optimizer(config, adam);
  LossConfig loss;
  for (auto _ : state) {
    ParamSet grads = ParamSet::zeros(config);
    compute_loss_gradients(model, batch, loss, grads);
    optimizer.step(model.params(), grads);
  }
}
BENCHMARK(BM_TrainStep);

void BM_KMeansSelect(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(7);
  Eigen::MatrixXd features(n, 128);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 128; ++j) features(i, j) = rng.uniform(-1.0, 1.0);
  }
  const int k = n / 100;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kmeans_select(features, k, 11));
  }
}
BENCHMARK(BM_KMeansSelect)->Arg(1000)->Arg(2000);

void BM_SampleReplay(benchmark::State& state) {
  ReplayBuffer buffer;
  for (int task = 0; task < 4; ++task) {
    std::vector<Example> batch;
    for (int i = 0; i < 100; ++i) {
      Example ex;
      ex.tokens = {2, 3, 4};
      ex.task_id = task;
      ex.id = (static_cast<uint64_t>(task) << 32) | i;
      batch.push_back(ex);
    }
    buffer.store(batch, task);
  }
  uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_replay(buffer, 5, 8, ++seed));
  }
}
BENCHMARK(BM_SampleReplay);

}  // namespace

BENCHMARK_MAIN();
