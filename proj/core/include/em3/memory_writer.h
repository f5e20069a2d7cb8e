#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "em3/explicit_memory.h"
#include "em3/model.h"

namespace em3 {

enum class WeightMode { kExact, kApproximate };

const char* to_string(WeightMode mode) noexcept;
WeightMode parse_weight_mode(std::string_view text);

// Importance of every token of one (layer, kv head), as attention received
// from all other eligible tokens. Excluded tokens carry weight 0.
//
// In approximate mode the true weights are w * exp(log_scale); log_scale is
// non-zero only when the largest score would risk overflowing exp().
struct HeadWeights {
  std::vector<double> w;
  double log_scale = 0.0;
};

struct TokenWeights {
  WeightMode mode = WeightMode::kApproximate;
  int n_layers = 0;
  int n_kv_heads = 0;
  int prefix_len = 0;            // leading positions that belong to the BOS prefix
  std::vector<bool> eligible;    // per position (prefix + reference)
  std::vector<HeadWeights> heads;  // [layer][kv_head]

  const HeadWeights& at(int layer, int kv_head) const {
    return heads[static_cast<std::size_t>(layer) * n_kv_heads + kv_head];
  }
};

// q is [n_query_heads][n_tokens][d_h] (several query heads may share the key
// head), k is [n_tokens][d_h]. Both are unrotated projections: no causal mask
// and no position encoding take part.
//
//   exact:        w_j = sum_i softmax_j(q_i . k_j / sqrt(d_h))
//   approximate:  w_j = sum_i exp(q_i . k_j / sqrt(d_h))
//
// Sums and softmaxes run over non-excluded rows/columns only. Throws
// ErrorCode::kInput when every position is excluded.
HeadWeights token_weights_exact(std::span<const float> q, std::span<const float> k, int n_tokens,
                                int head_dim, const std::vector<bool>& excluded);
HeadWeights token_weights_approx(std::span<const float> q, std::span<const float> k,
                                 int n_tokens, int head_dim, const std::vector<bool>& excluded);

// Token weights for every memory layer and kv head of an encoded reference.
// Each kv head pools the query heads of its GQA group. The BOS prefix is
// excluded.
TokenWeights compute_token_weights(const ReferenceKV& kv, WeightMode mode);

// Top-k eligible positions by weight, ties to the lower index, returned in
// ascending order. Returns every eligible position when fewer than k exist.
std::vector<int> select_top_k(std::span<const double> weights, const std::vector<bool>& eligible,
                              int k);

// Keeps the top-k tokens per (layer, kv head).
ExplicitMemory sparsify(const ReferenceKV& kv, const TokenWeights& weights, int k,
                        std::uint64_t id = 0);

// encode_reference_kv -> compute_token_weights -> sparsify(l_mem).
ExplicitMemory write_memory(const Model& model, std::span<const Token> ref_tokens,
                            WeightMode mode = WeightMode::kApproximate, std::uint64_t id = 0);

}  // namespace em3
