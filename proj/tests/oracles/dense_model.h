#pragma once

#include <span>
#include <vector>

#include "em3/model.h"

namespace em3::oracle {

// Whole-sequence recomputation of the model in double precision. Scores are
// materialized as one dense matrix over [memory tokens | context tokens] with
// an explicit visibility mask; nothing is cached between calls.
struct DenseTrace {
  std::vector<double> logits;                // [n][n_vocab], empty if not requested
  std::vector<std::vector<double>> keys;     // per layer [n][H_kv][d_h], rotated
  std::vector<std::vector<double>> values;   // per layer [n][H_kv][d_h]
  std::vector<std::vector<double>> queries;  // per layer [n][H][d_h], unrotated
  std::vector<std::vector<double>> raw_keys; // per layer [n][H_kv][d_h], unrotated
};

struct DenseOptions {
  int attn_layers = -1;  // -1: every layer
  int mlp_layers = -1;   // -1: same as attn_layers
  bool logits = true;
  int memory_from = -1;  // first position that sees memories; -1: context start
};

DenseTrace dense_run(const Model& model, std::span<const Token> tokens,
                     std::span<const int> positions,
                     const std::vector<const ExplicitMemory*>& memories = {},
                     DenseOptions options = {});

// One attention sublayer. x holds the normalized features of every token of
// the sequence ([n][d], in position order); rows [first_query, n) are
// returned, [n - first_query][d].
std::vector<double> dense_attention(const Model& model, int layer, std::span<const float> x,
                                    std::span<const int> positions, int first_query,
                                    const std::vector<const ExplicitMemory*>& memories);

// Rotary rotation in double, adjacent pairs.
std::vector<double> rotate(std::span<const double> v, int position, double base);

}  // namespace em3::oracle
