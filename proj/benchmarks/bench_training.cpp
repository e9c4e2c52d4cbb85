#include <benchmark/benchmark.h>

#include "ebmc/trainer.hpp"

using namespace ebmc;

namespace {

struct Fixture {
  data::GeneratorSpec spec = data::GeneratorSpec::default_imbalanced(1);
  data::MultimodalBatch batch = data::generate(spec, 32, 0);
  TrainConfig config;
  train::Model model = train::Model::for_batch(batch, spec.num_classes, config.dims, 1);
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_Stage1Step(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    ad::Tape tape;
    const auto params = nn::Bindings::on_tape(f.model.store, tape, [](nn::ParamGroup) { return true; });
    const auto r = train::stage1_objective(f.model, f.config, params, f.batch, 7);
    tape.backward(r.total);
  }
}
BENCHMARK(BM_Stage1Step)->Unit(benchmark::kMillisecond);

void BM_Stage2Step(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    const auto base = nn::Bindings::constant(f.model.store);
    const auto held = train::held_terms(f.model, f.config, base, base, f.batch, 7);
    ad::Tape tape;
    const auto params = nn::Bindings::on_tape(f.model.store, tape, [](nn::ParamGroup) { return true; });
    const auto r = train::stage2_objective(f.model, f.config, params, f.batch, 7, held);
    tape.backward(r.total);
  }
}
BENCHMARK(BM_Stage2Step)->Unit(benchmark::kMillisecond);

void BM_Evaluate(benchmark::State& state) {
  auto& f = fixture();
  const auto test = data::generate(f.spec, static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(train::evaluate(f.model, f.config, test));
}
BENCHMARK(BM_Evaluate)->Arg(4000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
