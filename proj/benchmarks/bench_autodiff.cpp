#include <benchmark/benchmark.h>

#include <random>

#include "ebmc/autodiff.hpp"

using namespace ebmc;
using ad::Tensor;

namespace {

Tensor random(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(rows, cols);
  for (double& v : t.mutable_data()) v = n(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random(n, n, 1), b = random(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ad::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(32)->Arg(64);

void BM_SoftmaxRows(benchmark::State& state) {
  const Tensor x = random(static_cast<std::size_t>(state.range(0)), 4, 3);
  for (auto _ : state) benchmark::DoNotOptimize(ad::softmax_rows(x));
}
BENCHMARK(BM_SoftmaxRows)->Arg(32)->Arg(1024);

// Two-layer MLP cross-entropy, forward and backward.
void BM_MlpBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Tensor x = random(batch, 16, 4), w1 = random(16, 32, 5), w2 = random(32, 4, 6);
  std::vector<int> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<int>(i % 4);
  for (auto _ : state) {
    ad::Tape tape;
    const Tensor a = tape.variable(w1), b = tape.variable(w2);
    const Tensor logits = ad::matmul(ad::relu(ad::matmul(x, a)), b);
    const Tensor loss = ad::scale(ad::mean(ad::pick(ad::log_softmax_rows(logits), labels)), -1.0);
    tape.backward(loss);
    benchmark::DoNotOptimize(a.grad());
  }
}
BENCHMARK(BM_MlpBackward)->Arg(32)->Arg(256);

}  // namespace
