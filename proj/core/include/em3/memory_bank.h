#pragma once

#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "em3/config.h"
#include "em3/explicit_memory.h"
#include "em3/quantizer.h"

namespace em3 {

// Serialized form of one memory inside a bank file or a bank-service result:
//   u16 n_layers, u16 n_kv_heads, u16 n_tokens, u16 head_dim,
//   u16 positions[n_vectors],
//   raw:       f32 keys[n_vectors][d_h], f32 values[n_vectors][d_h]
//   quantized: key codes[n_vectors][code_bytes], value codes[n_vectors][code_bytes]
std::vector<std::uint8_t> encode_memory_record(const ExplicitMemory& memory,
                                               const MemoryCodebooks* codebooks);
ExplicitMemory decode_memory_record(std::span<const std::uint8_t> record, std::uint64_t id,
                                    const MemoryCodebooks* codebooks);

// Keys and values pooled from `memories`, at most max_samples of each drawn
// uniformly (deterministic in seed).
MemoryCodebooks train_memory_codebooks(std::span<const ExplicitMemory> memories,
                                       const QuantizerGeometry& geometry,
                                       const QuantizerTrainOptions& options = {},
                                       std::size_t max_samples = 100000);

// Persistent id -> memory store, raw f32 or quantized.
//
// File layout (little-endian):
//   "EM3B", u16 version, u16 flags (bit0 = quantized), u64 model hash,
//   u64 count, then id-sorted table of (u64 id, u64 offset, u32 length),
//   then the records.
//
// Immutable files, in-memory appends (cold start) guarded by a shared mutex.
class MemoryBank {
 public:
  // Empty bank; quantized iff codebooks are given.
  MemoryBank(const ModelConfig& config, std::uint64_t model_hash,
             std::optional<MemoryCodebooks> codebooks = std::nullopt);
  MemoryBank(MemoryBank&& other) noexcept;
  MemoryBank& operator=(MemoryBank&&) = delete;

  // Throws kCompatibility when the stored model hash differs from
  // expected_model_hash or a quantized bank is opened without codebooks,
  // kFormat on corrupt files.
  static MemoryBank load(const std::filesystem::path& path, const ModelConfig& config,
                         std::uint64_t expected_model_hash,
                         std::optional<MemoryCodebooks> codebooks = std::nullopt);
  void save(const std::filesystem::path& path) const;
  std::vector<std::uint8_t> serialize() const;

  // Encodes (and quantizes) the memory; replaces any record with the same id.
  void put(const ExplicitMemory& memory);
  // Decoded memory; throws kNotFound for unknown ids.
  ExplicitMemory get(std::uint64_t id) const;
  // Stored record bytes, as shipped by the bank service.
  std::vector<std::uint8_t> record(std::uint64_t id) const;
  bool contains(std::uint64_t id) const;

  std::size_t size() const;
  std::vector<std::uint64_t> ids() const;
  bool quantized() const { return codebooks_.has_value(); }
  const std::optional<MemoryCodebooks>& codebooks() const { return codebooks_; }
  std::uint64_t model_hash() const { return model_hash_; }
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  std::uint64_t model_hash_ = 0;
  std::optional<MemoryCodebooks> codebooks_;
  mutable std::shared_mutex mu_;
  std::map<std::uint64_t, std::vector<std::uint8_t>> records_;
};

void bank_save(std::span<const ExplicitMemory> memories, const std::filesystem::path& path,
               const ModelConfig& config, std::uint64_t model_hash,
               const MemoryCodebooks* codebooks);

// Fixed-capacity LRU of decoded memories. Every call is atomic.
class MemoryCache {
 public:
  using Entry = std::shared_ptr<const ExplicitMemory>;

  explicit MemoryCache(std::size_t capacity);

  // Promotes on hit; nullptr on miss.
  Entry get(std::uint64_t id);
  // Inserts as most recent, evicting the least recently used when full.
  void put(std::uint64_t id, Entry memory);
  bool contains(std::uint64_t id) const;
  void clear();

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  std::uint64_t hits() const;
  std::uint64_t misses() const;
  // Ids from most to least recently used.
  std::vector<std::uint64_t> recency() const;

 private:
  using Order = std::list<std::uint64_t>;
  struct Slot {
    Entry memory;
    Order::iterator pos;
  };
  std::size_t capacity_;
  mutable std::mutex mu_;
  Order order_;
  std::unordered_map<std::uint64_t, Slot> map_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

// Storage accounting for a bank of n_refs memories.
//   full      = n_refs * L * 2 * H * l_ref * d_h * bytes     (head axis at H)
//   sparse    = n_refs * L_mem * 2 * H_kv * l_mem * d_h * bytes
//   quantized = sparse / quantizer compression rate
struct StorageReport {
  double full_bytes = 0;
  double sparse_bytes = 0;
  double quantized_bytes = 0;
  double sparsity_factor = 0;    // full / sparse
  double quant_ratio = 1;        // raw / code bytes per vector
  double total_compression = 0;  // sparsity_factor * quant_ratio
};

StorageReport storage_report(const ModelConfig& config, double n_refs, int bytes_per_scalar = 2,
                             const std::optional<QuantizerGeometry>& quantizer = std::nullopt);

}  // namespace em3
