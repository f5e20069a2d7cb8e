#include <benchmark/benchmark.h>

#include <random>

#include "em3/memory_bank.h"
#include "em3/memory_writer.h"
#include "em3/model.h"
#include "em3/quantizer.h"

namespace em3 {
namespace {

std::vector<Token> reference(int n) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<Token> tok(32, 126);
  std::vector<Token> ref(static_cast<std::size_t>(n));
  for (auto& t : ref) t = tok(rng);
  return ref;
}

void BM_WriteMemory(benchmark::State& state) {
  const auto model = Model::init(ModelConfig::toy(), 0);
  const auto ref = reference(model.config().ref_len);
  const auto mode = state.range(0) ? WeightMode::kExact : WeightMode::kApproximate;
  for (auto _ : state) benchmark::DoNotOptimize(write_memory(model, ref, mode));
}
BENCHMARK(BM_WriteMemory)->Arg(0)->Arg(1);

std::vector<float> samples(std::size_t n, int dim) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> d;
  std::vector<float> v(n * static_cast<std::size_t>(dim));
  for (auto& x : v) x = d(rng);
  return v;
}

void BM_QuantizerEncode(benchmark::State& state) {
  const auto cb = quantizer_train(samples(4000, 16), QuantizerGeometry::desk(16), {10, 1});
  const auto v = samples(1, 16);
  for (auto _ : state) benchmark::DoNotOptimize(cb.encode(v));
}
BENCHMARK(BM_QuantizerEncode);

void BM_QuantizerDecode(benchmark::State& state) {
  const auto cb = quantizer_train(samples(4000, 16), QuantizerGeometry::desk(16), {10, 1});
  const auto code = cb.encode(samples(1, 16));
  for (auto _ : state) benchmark::DoNotOptimize(cb.decode(code));
}
BENCHMARK(BM_QuantizerDecode);

void BM_BankGet(benchmark::State& state) {
  const auto model = Model::init(ModelConfig::toy(), 0);
  const auto m = write_memory(model, reference(model.config().ref_len));
  std::optional<MemoryCodebooks> cbs;
  if (state.range(0)) {
    cbs = train_memory_codebooks(std::vector<ExplicitMemory>(40, m),
                                 QuantizerGeometry::desk(model.config().head_dim), {5, 1});
  }
  MemoryBank bank(model.config(), model.fingerprint(), cbs);
  bank.put(m);
  for (auto _ : state) benchmark::DoNotOptimize(bank.get(m.id));
}
BENCHMARK(BM_BankGet)->Arg(0)->Arg(1);

}  // namespace
}  // namespace em3
