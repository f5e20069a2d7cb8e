#include <benchmark/benchmark.h>

#include <random>

#include "em3/retrieval.h"

namespace em3 {
namespace {

void BM_IndexSearch(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::normal_distribution<float> d;
  const int dim = 256;
  RetrievalIndex index(dim);
  std::vector<float> v(dim);
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    for (auto& x : v) x = d(rng);
    index.add(static_cast<std::uint64_t>(i), v, {});
  }
  for (auto& x : v) x = d(rng);
  for (auto _ : state) benchmark::DoNotOptimize(index.search(v, 5));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IndexSearch)->Arg(1000)->Arg(100000);

void BM_Embed(benchmark::State& state) {
  const HashedNgramEmbedder e;
  std::vector<Token> t(64);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Token>(97 + i % 26);
  for (auto _ : state) benchmark::DoNotOptimize(e.embed(t));
}
BENCHMARK(BM_Embed);

void BM_Overlap(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<Token> tok(0, 20);
  std::vector<Token> t(static_cast<std::size_t>(state.range(0))), r(128);
  for (auto& x : t) x = tok(rng);
  for (auto& x : r) x = tok(rng);
  for (auto _ : state) benchmark::DoNotOptimize(overlap(t, r));
}
BENCHMARK(BM_Overlap)->Arg(128)->Arg(1024);

}  // namespace
}  // namespace em3
