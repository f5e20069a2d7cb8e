#pragma once

#include <cstdint>
#include <vector>

namespace em3 {

using Token = std::int32_t;

// Every shape symbol of the model and of the memory recall cycle.
//
// Position layout used throughout (b = bos_ref_tokens.size()):
//   [0, b)              modified BOS ("<s>Reference:")
//   [b, b + ref_len)    shared parallel interval for all memory keys
//   [b + ref_len, ...)  context, starting with the standard BOS separator
struct ModelConfig {
  int n_layers = 8;        // L
  int n_heads = 8;         // H, query heads
  int n_kv_heads = 2;      // H_kv
  int head_dim = 16;       // d_h
  int hidden_dim = 128;    // d = H * d_h
  int mlp_width = 128;     // W
  int n_vocab = 512;
  int n_mem_layers = 4;    // L_mem, memory layers are [0, L_mem)
  int ref_len = 32;        // l_ref
  int mem_tokens = 4;      // l_mem, sparse tokens per memory per kv head
  int chunk_len = 16;      // l_chunk
  int refs_per_chunk = 5;
  std::vector<Token> bos_ref_tokens;
  Token bos_ctx_token = 256;
  float rope_base = 10000.0f;
  float norm_eps = 1e-5f;

  // Desk-scale default: L=8, H=8, H_kv=2, d_h=16, W=128, vocab 512.
  static ModelConfig toy();
  // 2.4B shape: L=44, H=40, H_kv=8, d_h=80, W=3200, vocab 60416.
  static ModelConfig reference();

  // Throws ErrorCode::kConfig describing the first violated invariant.
  void validate() const;

  int group_size() const { return n_heads / n_kv_heads; }
  int prefix_len() const { return static_cast<int>(bos_ref_tokens.size()); }
  int memory_start() const { return prefix_len(); }
  int context_start() const { return prefix_len() + ref_len; }

  // Stable hash over all fields; part of every artifact header.
  std::uint64_t hash() const;

  bool operator==(const ModelConfig&) const = default;
};

// Parameter count excluding token embedding and LM head.
std::uint64_t non_embedding_param_count(const ModelConfig& config);

}  // namespace em3
