#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "em3/bank_service.h"
#include "em3/memory_bank.h"
#include "em3/memory_writer.h"
#include "em3/model.h"
#include "em3/retrieval.h"

namespace em3 {

enum class StartMode { kWarm, kCold };

const char* to_string(StartMode mode) noexcept;
StartMode parse_start_mode(std::string_view text);

// Human-readable "key = value" engine configuration. '#' starts a comment.
// Relative paths resolve against the directory of the config file.
//
//   model, bank, index, codebook     artifact paths
//   cache_capacity                   decoded memories kept in RAM
//   chunk_len, n_refs                0 / -1 take the model's values
//   filter_threshold                 leakage filter, 0 disables
//   mode                             warm | cold
//   weight_mode                      exact | approximate (cold encodes)
//   memory                           on | off
//   bank_endpoint                    host:port of a bank server
//   embedder_endpoint, embedding_dim remote embedder, local hashed otherwise
//   timeout_ms, tolerant             remote timeouts; tolerant -> zero memories
struct EngineConfig {
  std::filesystem::path model_path;
  std::filesystem::path bank_path;
  std::filesystem::path index_path;
  std::filesystem::path codebook_path;
  std::size_t cache_capacity = 64;
  int chunk_len = 0;
  int n_refs = -1;
  double filter_threshold = 0.0;
  StartMode mode = StartMode::kWarm;
  WeightMode weight_mode = WeightMode::kApproximate;
  bool use_memory = true;
  std::string bank_endpoint;
  std::string embedder_endpoint;
  int embedding_dim = 256;
  std::chrono::milliseconds timeout{5000};
  bool tolerant = false;

  // Key/value pairs in file order; throws kConfig on lines without '='.
  static std::vector<std::pair<std::string, std::string>> parse_pairs(std::string_view text);
  // Throws kConfig on unknown keys or bad values.
  static EngineConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static EngineConfig load(const std::filesystem::path& path);
  // Applies one key/value pair, as parse() does for each line.
  void set(std::string_view key, std::string_view value,
           const std::filesystem::path& base_dir = {});
};

// Shared, read-mostly state; many sessions may use one instance.
struct EngineResources {
  std::shared_ptr<const Model> model;
  std::shared_ptr<MemoryBank> bank;                 // local bank, may be null
  std::shared_ptr<const RetrievalIndex> index;      // null or empty: no memories
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<MemoryCache> cache;
  std::shared_ptr<const BankClient> remote;         // replaces index + bank lookup
};

// Loads every artifact named by `config` and checks their compatibility
// (kCompatibility on mismatch).
std::shared_ptr<EngineResources> open_engine(const EngineConfig& config);

struct SessionOptions {
  int chunk_len = 0;   // 0: model chunk_len
  int n_refs = -1;     // -1: model refs_per_chunk
  double filter_threshold = 0.0;
  StartMode mode = StartMode::kWarm;
  WeightMode weight_mode = WeightMode::kApproximate;
  bool use_memory = true;
  bool tolerant = false;

  static SessionOptions from(const EngineConfig& config);
};

struct EngineStats {
  std::uint64_t retrievals = 0;         // retrieval points, including empty ones
  std::uint64_t memories_attached = 0;  // summed over retrievals
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t bank_reads = 0;
  std::uint64_t cold_encodes = 0;
  std::uint64_t filtered = 0;
  std::uint64_t remote_failures = 0;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t generated_tokens = 0;
};

// One decoding session: owns its KV cache and active memories.
//
// The prompt is processed in chunks of chunk_len, one retrieval per chunk.
// Decoding keeps the last prompt retrieval for the first chunk_len generated
// tokens, then re-retrieves before every further chunk using the previous
// chunk_len generated tokens as the query.
class Session {
 public:
  Session(std::shared_ptr<const EngineResources> resources, SessionOptions options = {});

  // Restarts the sequence. Returns logits of the last prompt token.
  std::span<const float> run_prompt(std::span<const Token> prompt);
  // Greedy decoding. The last generated token is returned but not forwarded.
  std::vector<Token> decode(int n_tokens);
  std::vector<Token> generate(std::span<const Token> prompt, int n_tokens);

  // cache -> bank (warm, or cold when already written) -> encode (cold).
  std::shared_ptr<const ExplicitMemory> fetch_memory(std::uint64_t id);

  const EngineStats& stats() const { return stats_; }
  std::span<const float> last_logits() const { return last_logits_; }
  const std::vector<std::uint64_t>& active_ids() const { return active_ids_; }
  // Memory ids attached at each retrieval, in order.
  const std::vector<std::vector<std::uint64_t>>& retrieval_log() const { return log_; }
  int chunk_len() const { return chunk_len_; }
  int n_refs() const { return n_refs_; }

 private:
  void retrieve(std::span<const Token> query);
  void forward(std::span<const Token> tokens);

  std::shared_ptr<const EngineResources> res_;
  SessionOptions opt_;
  int chunk_len_ = 0;
  int n_refs_ = 0;
  KVCache kv_;
  std::vector<std::shared_ptr<const ExplicitMemory>> active_;
  std::vector<std::uint64_t> active_ids_;
  std::vector<Token> history_;     // prompt and generated tokens of this sequence
  std::vector<Token> generated_;
  int since_retrieval_ = 0;
  bool started_ = false;
  std::vector<float> last_logits_;
  EngineStats stats_;
  std::vector<std::vector<std::uint64_t>> log_;
};

// Retrieval points for a p-token prompt and g generated tokens.
std::uint64_t expected_retrievals(std::uint64_t prompt_len, std::uint64_t n_generated,
                                  int chunk_len);

}  // namespace em3
