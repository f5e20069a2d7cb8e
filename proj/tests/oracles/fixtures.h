#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "em3/engine.h"

namespace em3::testing {

// Small config with the byte tokenizer's BOS tokens; d = H * d_h.
ModelConfig small_config(int L, int H, int H_kv, int d_h);

std::vector<float> random_vector(std::size_t n, std::mt19937_64& rng, double stddev = 1.0);

// Random memory with the model's memory geometry; keys are arbitrary vectors.
ExplicitMemory random_memory(const ModelConfig& config, std::mt19937_64& rng, std::uint64_t id,
                             int n_tokens = -1);

// Deterministic pseudo-English lines.
std::vector<std::string> toy_corpus(int n_lines, std::uint64_t seed);

// Removed with its contents on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// References split into l_ref pieces with sequential ids.
std::vector<std::vector<Token>> reference_pieces(const std::vector<std::string>& lines,
                                                 int ref_len);

// Everything an engine session needs, built in memory.
struct Fixture {
  std::shared_ptr<const Model> model;
  std::vector<std::vector<Token>> refs;
  std::shared_ptr<RetrievalIndex> index;
  std::vector<ExplicitMemory> memories;
  std::optional<MemoryCodebooks> codebooks;

  // bank filled with every memory (warm) or left empty (cold).
  std::shared_ptr<EngineResources> resources(bool warm, bool quantized,
                                             std::size_t cache_capacity = 64) const;
};

Fixture make_fixture(const ModelConfig& config, int n_lines, std::uint64_t seed,
                     bool train_codebooks = false, WeightMode mode = WeightMode::kApproximate);

}  // namespace em3::testing
