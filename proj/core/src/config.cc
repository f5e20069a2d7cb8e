#include "em3/config.h"

#include <string>

#include "em3/binary_io.h"
#include "em3/error.h"
#include "em3/tokenizer.h"

namespace em3 {

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.bos_ref_tokens = ByteTokenizer{}.reference_bos();
  c.bos_ctx_token = ByteTokenizer::kBos;
  return c;
}

ModelConfig ModelConfig::reference() {
  ModelConfig c;
  c.n_layers = 44;
  c.n_heads = 40;
  c.n_kv_heads = 8;
  c.head_dim = 80;
  c.hidden_dim = 3200;
  c.mlp_width = 3200;
  c.n_vocab = 60416;
  c.n_mem_layers = 22;
  c.ref_len = 128;
  c.mem_tokens = 8;
  c.chunk_len = 64;
  c.refs_per_chunk = 5;
  c.bos_ref_tokens = ByteTokenizer{}.reference_bos();
  c.bos_ctx_token = ByteTokenizer::kBos;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    require(v > 0, ErrorCode::kConfig, std::string(name) + " must be positive");
  };
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(n_kv_heads, "n_kv_heads");
  positive(head_dim, "head_dim");
  positive(hidden_dim, "hidden_dim");
  positive(mlp_width, "mlp_width");
  positive(n_vocab, "n_vocab");
  positive(ref_len, "ref_len");
  positive(mem_tokens, "mem_tokens");
  positive(chunk_len, "chunk_len");
  require(refs_per_chunk >= 0, ErrorCode::kConfig, "refs_per_chunk must be non-negative");
  require(head_dim % 2 == 0, ErrorCode::kConfig, "d_h must be even");
  require(hidden_dim == n_heads * head_dim, ErrorCode::kConfig, "d must equal H * d_h");
  require(n_heads % n_kv_heads == 0, ErrorCode::kConfig, "H must be divisible by H_kv");
  require(n_mem_layers >= 1 && n_mem_layers <= n_layers, ErrorCode::kConfig,
          "L_mem must lie in [1, L]");
  require(mem_tokens <= ref_len, ErrorCode::kConfig, "l_mem must not exceed l_ref");
  require(ref_len <= 65535, ErrorCode::kConfig, "l_ref must fit in 16 bits");
  require(!bos_ref_tokens.empty(), ErrorCode::kConfig, "bos_ref_tokens must be non-empty");
  for (Token t : bos_ref_tokens) {
    require(t >= 0 && t < n_vocab, ErrorCode::kConfig, "bos_ref_tokens outside vocabulary");
  }
  require(bos_ctx_token >= 0 && bos_ctx_token < n_vocab, ErrorCode::kConfig,
          "bos_ctx_token outside vocabulary");
  require(rope_base > 1.0f, ErrorCode::kConfig, "rope_base must exceed 1");
  require(norm_eps > 0.0f, ErrorCode::kConfig, "norm_eps must be positive");
}

std::uint64_t ModelConfig::hash() const {
  Fnv1a h;
  for (int v : {n_layers, n_heads, n_kv_heads, head_dim, hidden_dim, mlp_width, n_vocab,
                n_mem_layers, ref_len, mem_tokens, chunk_len, refs_per_chunk}) {
    h.update_u64(static_cast<std::uint64_t>(v));
  }
  h.update_u64(bos_ref_tokens.size());
  for (Token t : bos_ref_tokens) h.update_u64(static_cast<std::uint64_t>(t));
  h.update_u64(static_cast<std::uint64_t>(bos_ctx_token));
  const float floats[] = {rope_base, norm_eps};
  h.update_f32s(floats);
  return h.digest();
}

std::uint64_t non_embedding_param_count(const ModelConfig& c) {
  const std::uint64_t d = static_cast<std::uint64_t>(c.hidden_dim);
  const std::uint64_t kv = static_cast<std::uint64_t>(c.n_kv_heads) * c.head_dim;
  const std::uint64_t w = static_cast<std::uint64_t>(c.mlp_width);
  // Q and O are d x d, K and V are d x (H_kv d_h), gated MLP is 3 d W, two norms.
  const std::uint64_t per_layer = 2 * d * d + 2 * d * kv + 3 * d * w + 2 * d;
  return per_layer * static_cast<std::uint64_t>(c.n_layers) + d;
}

}  // namespace em3
