#include <benchmark/benchmark.h>

#include <random>

#include "em3/memory_writer.h"
#include "em3/model.h"

namespace em3 {
namespace {

std::vector<ExplicitMemory> memories(const Model& model, int n) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<Token> tok(32, 126);
  std::vector<ExplicitMemory> out;
  for (int i = 0; i < n; ++i) {
    std::vector<Token> ref(static_cast<std::size_t>(model.config().ref_len));
    for (auto& t : ref) t = tok(rng);
    out.push_back(write_memory(model, ref, WeightMode::kApproximate, i));
  }
  return out;
}

void BM_ForwardChunk(benchmark::State& state) {
  const auto model = Model::init(ModelConfig::toy(), 0);
  const auto mems = memories(model, static_cast<int>(state.range(0)));
  const auto refs = as_refs(mems);
  const std::vector<Token> chunk(static_cast<std::size_t>(model.config().chunk_len), 'a');
  for (auto _ : state) {
    KVCache cache(model.config());
    model.begin_sequence(cache);
    benchmark::DoNotOptimize(model.forward_chunk(chunk, cache, refs));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(chunk.size()));
}
BENCHMARK(BM_ForwardChunk)->Arg(0)->Arg(5);

void BM_DecodeStep(benchmark::State& state) {
  const auto model = Model::init(ModelConfig::toy(), 0);
  const auto mems = memories(model, static_cast<int>(state.range(0)));
  const auto refs = as_refs(mems);
  const std::vector<Token> one = {'a'};
  KVCache cache(model.config());
  model.begin_sequence(cache);
  for (auto _ : state) {
    if (cache.n_tokens() > 512) {
      state.PauseTiming();
      model.begin_sequence(cache);
      state.ResumeTiming();
    }
    benchmark::DoNotOptimize(model.forward_chunk(one, cache, refs));
  }
}
BENCHMARK(BM_DecodeStep)->Arg(0)->Arg(5);

}  // namespace
}  // namespace em3
