#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "em3/config.h"
#include "em3/explicit_memory.h"

namespace em3 {

// Row-major weights, [out][in]. The order of fields is the checkpoint order.
struct LayerParams {
  std::vector<float> attn_norm;  // [d]
  std::vector<float> wq;         // [H d_h][d]
  std::vector<float> wk;         // [H_kv d_h][d]
  std::vector<float> wv;         // [H_kv d_h][d]
  std::vector<float> wo;         // [d][H d_h]
  std::vector<float> mlp_norm;   // [d]
  std::vector<float> w_gate;     // [W][d]
  std::vector<float> w_up;       // [W][d]
  std::vector<float> w_down;     // [d][W]

  bool operator==(const LayerParams&) const = default;
};

struct ModelParams {
  std::vector<float> embedding;  // [n_vocab][d]
  std::vector<LayerParams> layers;
  std::vector<float> final_norm;  // [d]
  std::vector<float> lm_head;     // [n_vocab][d]

  bool operator==(const ModelParams&) const = default;
};

// Per-layer context keys (post-rotation) and values with their absolute
// positions. Grows monotonically; one decode session owns one cache.
class KVCache {
 public:
  KVCache() = default;
  KVCache(int n_layers, int n_kv_heads, int head_dim);
  explicit KVCache(const ModelConfig& config)
      : KVCache(config.n_layers, config.n_kv_heads, config.head_dim) {}

  int n_layers() const { return static_cast<int>(layers_.size()); }
  int n_tokens(int layer = 0) const;
  bool empty() const { return layers_.empty() || layers_[0].positions.empty(); }
  // Last position in layer 0, or -1 when empty.
  int last_position() const;
  std::span<const int> positions(int layer) const { return layers_.at(layer).positions; }
  std::span<const float> key(int layer, int token, int kv_head) const;
  std::span<const float> value(int layer, int token, int kv_head) const;

  // keys/values are [token][kv_head][d_h]. Positions must continue strictly
  // increasing; violations throw ErrorCode::kState.
  void append(int layer, std::span<const int> positions, std::span<const float> keys,
              std::span<const float> values);
  void clear();

 private:
  struct Layer {
    std::vector<int> positions;
    std::vector<float> keys;
    std::vector<float> values;
  };
  std::vector<Layer> layers_;
  int n_kv_heads_ = 0;
  int head_dim_ = 0;
};

struct Logits {
  int n_rows = 0;
  int n_vocab = 0;
  std::vector<float> data;

  std::span<const float> row(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * n_vocab, static_cast<std::size_t>(n_vocab)};
  }
  std::span<const float> last() const { return row(n_rows - 1); }
};

// Records the softmax rows produced by one attention call, for inspection.
struct AttentionProbe {
  struct Row {
    int token = 0;
    int head = 0;
    int kv_head = 0;
    int n_memory_keys = 0;
    std::vector<float> weights;  // [memory keys..., context keys...]
    const float* first_memory_key = nullptr;
    const float* first_context_key = nullptr;
  };
  std::vector<Row> rows;
};

// Full key-values of one reference, produced by the memory-layer-only
// encoding pass. Keys/values cover the reference tokens only (BOS prefix
// excluded); the unrotated projections cover prefix and reference so that
// token weights can mark the prefix as excluded.
struct ReferenceKV {
  int n_layers = 0;     // L_mem
  int n_heads = 0;      // H
  int n_kv_heads = 0;   // H_kv
  int head_dim = 0;
  int prefix_len = 0;   // b
  int n_tokens = 0;     // reference tokens
  std::vector<std::vector<float>> keys;         // per layer [kv_head][token][d_h], rotated
  std::vector<std::vector<float>> values;       // per layer [kv_head][token][d_h]
  std::vector<std::vector<float>> raw_queries;  // per layer [head][prefix+token][d_h], unrotated
  std::vector<std::vector<float>> raw_keys;     // per layer [kv_head][prefix+token][d_h], unrotated

  int n_total() const { return prefix_len + n_tokens; }
};

class Model {
 public:
  // Deterministic in (config, seed). Throws ErrorCode::kConfig on bad config.
  static Model init(const ModelConfig& config, std::uint64_t seed);
  static Model from_params(const ModelConfig& config, ModelParams params);
  static Model load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::vector<std::uint8_t> serialize() const;
  static Model deserialize(std::span<const std::uint8_t> bytes);

  const ModelConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  // Hash over config and every parameter; stamped into bank files.
  std::uint64_t fingerprint() const { return fingerprint_; }

  // Runs tokens at the given absolute positions, appending to `cache`.
  // Memories are read by layers [0, L_mem) and are visible only to query
  // positions at or after the context start.
  Logits forward(std::span<const Token> tokens, std::span<const int> positions, KVCache& cache,
                 MemoryRefs memories = {}) const;

  // Clears `cache` and runs the modified BOS at [0, b) plus the context BOS
  // at the context start. Returns logits for those tokens.
  Logits begin_sequence(KVCache& cache) const;

  // Runs at most `max_len` tokens (0 means config().chunk_len) at the
  // positions following the cache. The cache must hold a started sequence.
  Logits forward_chunk(std::span<const Token> tokens, KVCache& cache, MemoryRefs memories = {},
                       int max_len = 0) const;

  // One attention sublayer over already-normalized features x ([n][d]).
  // Appends this layer's rotated keys and values to `cache`, returns [n][d].
  std::vector<float> attention_with_memory(int layer, std::span<const float> x,
                                           std::span<const int> positions, KVCache& cache,
                                           MemoryRefs memories = {},
                                           AttentionProbe* probe = nullptr) const;

  // Encodes "<s>Reference:" ++ ref_tokens through the attention of layers
  // [0, L_mem) and the MLPs of layers [0, L_mem - 1), self-attending only.
  ReferenceKV encode_reference_kv(std::span<const Token> ref_tokens) const;

  int kv_head_for(int query_head) const { return query_head / config_.group_size(); }

 private:
  Model(ModelConfig config, ModelParams params);

  struct Projections {
    std::vector<float> q;  // [n][H][d_h]
    std::vector<float> k;  // [n][H_kv][d_h]
    std::vector<float> v;  // [n][H_kv][d_h]
  };
  Projections project(int layer, std::span<const float> x, int n) const;
  std::vector<float> attend(int layer, Projections& proj, std::span<const int> positions,
                            KVCache& cache, MemoryRefs memories, AttentionProbe* probe) const;
  void add_mlp(int layer, std::span<float> h, int n) const;
  std::vector<float> rms_norm(std::span<const float> h, std::span<const float> scale, int n) const;

  ModelConfig config_;
  ModelParams params_;
  std::uint64_t fingerprint_ = 0;
};

}  // namespace em3
