#include "em3/explicit_memory.h"

#include <string>

#include "em3/error.h"

namespace em3 {

void ExplicitMemory::check_shape(const ModelConfig& config) const {
  require(n_layers == config.n_mem_layers, ErrorCode::kShape,
          "memory has " + std::to_string(n_layers) + " layers, model expects " +
              std::to_string(config.n_mem_layers));
  require(n_kv_heads == config.n_kv_heads, ErrorCode::kShape,
          "memory has " + std::to_string(n_kv_heads) + " kv heads, model expects " +
              std::to_string(config.n_kv_heads));
  require(head_dim == config.head_dim, ErrorCode::kShape, "memory head_dim mismatch");
  require(n_tokens >= 0 && n_tokens <= config.mem_tokens, ErrorCode::kShape,
          "memory token count exceeds l_mem");
  const std::size_t n = n_vectors();
  require(keys.size() == n * head_dim && values.size() == n * head_dim &&
              positions.size() == n,
          ErrorCode::kShape, "memory tensor sizes inconsistent with header");
}

std::vector<const ExplicitMemory*> as_refs(const std::vector<ExplicitMemory>& memories) {
  std::vector<const ExplicitMemory*> refs;
  refs.reserve(memories.size());
  for (const auto& m : memories) refs.push_back(&m);
  return refs;
}

}  // namespace em3
