#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "em3/config.h"

namespace em3 {

// Sparse attention key-values of one reference, shape
// (L_mem, 2, H_kv, n_tokens, d_h). Keys are stored after rotary encoding at
// their within-reference offset inside the shared memory interval; values are
// stored unrotated. n_tokens is l_mem, or fewer for very short references.
struct ExplicitMemory {
  std::uint64_t id = 0;
  int n_layers = 0;
  int n_kv_heads = 0;
  int n_tokens = 0;
  int head_dim = 0;
  std::vector<float> keys;            // [layer][kv_head][token][d_h]
  std::vector<float> values;          // [layer][kv_head][token][d_h]
  std::vector<std::int32_t> positions;  // [layer][kv_head][token], within-reference, ascending
  bool quantized = false;

  std::size_t vector_index(int layer, int head, int token) const {
    return (static_cast<std::size_t>(layer) * n_kv_heads + head) * n_tokens + token;
  }
  std::span<const float> key(int layer, int head, int token) const {
    return {keys.data() + vector_index(layer, head, token) * head_dim,
            static_cast<std::size_t>(head_dim)};
  }
  std::span<const float> value(int layer, int head, int token) const {
    return {values.data() + vector_index(layer, head, token) * head_dim,
            static_cast<std::size_t>(head_dim)};
  }
  std::span<const std::int32_t> head_positions(int layer, int head) const {
    return {positions.data() + vector_index(layer, head, 0), static_cast<std::size_t>(n_tokens)};
  }
  std::size_t n_vectors() const {
    return static_cast<std::size_t>(n_layers) * n_kv_heads * n_tokens;
  }

  // Throws ErrorCode::kShape if tensor sizes disagree with the header fields
  // or with `config`'s memory geometry.
  void check_shape(const ModelConfig& config) const;

  bool operator==(const ExplicitMemory&) const = default;
};

// Non-owning list of memories attached to one forward pass.
using MemoryRefs = std::span<const ExplicitMemory* const>;

std::vector<const ExplicitMemory*> as_refs(const std::vector<ExplicitMemory>& memories);

}  // namespace em3
