#include "em3/memory_writer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "em3/error.h"

namespace em3 {
namespace {

// Scores above this trigger one global max-subtraction in approximate mode.
constexpr double kApproxShiftThreshold = 80.0;

std::size_t sz(int a) { return static_cast<std::size_t>(a); }

int query_rows(std::span<const float> q, std::span<const float> k, int n_tokens, int head_dim) {
  require(n_tokens > 0 && head_dim > 0, ErrorCode::kInput, "token weights need tokens");
  require(k.size() == sz(n_tokens) * sz(head_dim), ErrorCode::kShape,
          "keys must be [n_tokens][d_h]");
  const std::size_t per_head = sz(n_tokens) * sz(head_dim);
  require(!q.empty() && q.size() % per_head == 0, ErrorCode::kShape,
          "queries must be [heads][n_tokens][d_h]");
  return static_cast<int>(q.size() / sz(head_dim));
}

void check_excluded(const std::vector<bool>& excluded, int n_tokens) {
  require(excluded.size() == sz(n_tokens), ErrorCode::kShape,
          "exclusion mask must cover every token");
  require(std::find(excluded.begin(), excluded.end(), false) != excluded.end(), ErrorCode::kInput,
          "all positions excluded from token weights");
}

double score(const float* q, const float* k, int head_dim, double scale) {
  double acc = 0.0;
  for (int i = 0; i < head_dim; ++i) acc += static_cast<double>(q[i]) * static_cast<double>(k[i]);
  return acc * scale;
}

}  // namespace

const char* to_string(WeightMode mode) noexcept {
  return mode == WeightMode::kExact ? "exact" : "approximate";
}

WeightMode parse_weight_mode(std::string_view text) {
  if (text == "exact") return WeightMode::kExact;
  if (text == "approximate" || text == "approx") return WeightMode::kApproximate;
  fail(ErrorCode::kConfig, "unknown weight mode '" + std::string(text) + "'");
}

HeadWeights token_weights_exact(std::span<const float> q, std::span<const float> k, int n_tokens,
                                int head_dim, const std::vector<bool>& excluded) {
  const int rows = query_rows(q, k, n_tokens, head_dim);
  check_excluded(excluded, n_tokens);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  HeadWeights out;
  out.w.assign(sz(n_tokens), 0.0);
  std::vector<double> s(sz(n_tokens));
  for (int r = 0; r < rows; ++r) {
    if (excluded[sz(r % n_tokens)]) continue;
    const float* qi = q.data() + sz(r) * sz(head_dim);
    double max_s = -INFINITY;
    for (int j = 0; j < n_tokens; ++j) {
      if (excluded[sz(j)]) continue;
      s[sz(j)] = score(qi, k.data() + sz(j) * sz(head_dim), head_dim, scale);
      require(std::isfinite(s[sz(j)]), ErrorCode::kNumeric, "non-finite attention score");
      max_s = std::max(max_s, s[sz(j)]);
    }
    double sum = 0.0;
    for (int j = 0; j < n_tokens; ++j) {
      if (excluded[sz(j)]) continue;
      s[sz(j)] = std::exp(s[sz(j)] - max_s);
      sum += s[sz(j)];
    }
    for (int j = 0; j < n_tokens; ++j) {
      if (!excluded[sz(j)]) out.w[sz(j)] += s[sz(j)] / sum;
    }
  }
  return out;
}

HeadWeights token_weights_approx(std::span<const float> q, std::span<const float> k,
                                 int n_tokens, int head_dim, const std::vector<bool>& excluded) {
  const int rows = query_rows(q, k, n_tokens, head_dim);
  check_excluded(excluded, n_tokens);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<double> scores(sz(rows) * sz(n_tokens), 0.0);
  double max_s = -INFINITY;
  for (int r = 0; r < rows; ++r) {
    if (excluded[sz(r % n_tokens)]) continue;
    const float* qi = q.data() + sz(r) * sz(head_dim);
    for (int j = 0; j < n_tokens; ++j) {
      if (excluded[sz(j)]) continue;
      const double s = score(qi, k.data() + sz(j) * sz(head_dim), head_dim, scale);
      require(std::isfinite(s), ErrorCode::kNumeric, "non-finite attention score");
      scores[sz(r) * sz(n_tokens) + sz(j)] = s;
      max_s = std::max(max_s, s);
    }
  }

  HeadWeights out;
  out.log_scale = max_s > kApproxShiftThreshold ? max_s : 0.0;
  out.w.assign(sz(n_tokens), 0.0);
  for (int r = 0; r < rows; ++r) {
    if (excluded[sz(r % n_tokens)]) continue;
    for (int j = 0; j < n_tokens; ++j) {
      if (excluded[sz(j)]) continue;
      out.w[sz(j)] += std::exp(scores[sz(r) * sz(n_tokens) + sz(j)] - out.log_scale);
    }
  }
  for (double w : out.w) {
    require(std::isfinite(w), ErrorCode::kNumeric, "approximate token weight overflowed");
  }
  return out;
}

TokenWeights compute_token_weights(const ReferenceKV& kv, WeightMode mode) {
  const int n = kv.n_total();
  const int group = kv.n_heads / kv.n_kv_heads;
  const std::size_t dh = sz(kv.head_dim);

  TokenWeights tw;
  tw.mode = mode;
  tw.n_layers = kv.n_layers;
  tw.n_kv_heads = kv.n_kv_heads;
  tw.prefix_len = kv.prefix_len;
  tw.eligible.assign(sz(n), true);
  std::vector<bool> excluded(sz(n), false);
  for (int i = 0; i < kv.prefix_len; ++i) {
    tw.eligible[sz(i)] = false;
    excluded[sz(i)] = true;
  }

  tw.heads.reserve(sz(kv.n_layers) * sz(kv.n_kv_heads));
  for (int layer = 0; layer < kv.n_layers; ++layer) {
    const auto& rq = kv.raw_queries[sz(layer)];
    const auto& rk = kv.raw_keys[sz(layer)];
    for (int g = 0; g < kv.n_kv_heads; ++g) {
      // Query heads of one group are contiguous in [head][token][d_h].
      std::span<const float> q(rq.data() + sz(g) * sz(group) * sz(n) * dh,
                               sz(group) * sz(n) * dh);
      std::span<const float> k(rk.data() + sz(g) * sz(n) * dh, sz(n) * dh);
      tw.heads.push_back(mode == WeightMode::kExact
                             ? token_weights_exact(q, k, n, kv.head_dim, excluded)
                             : token_weights_approx(q, k, n, kv.head_dim, excluded));
    }
  }
  return tw;
}

std::vector<int> select_top_k(std::span<const double> weights, const std::vector<bool>& eligible,
                              int k) {
  require(eligible.size() == weights.size(), ErrorCode::kShape,
          "eligibility mask must match weights");
  require(k >= 0, ErrorCode::kInput, "k must be non-negative");
  std::vector<int> candidates;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (eligible[i]) candidates.push_back(static_cast<int>(i));
  }
  const std::size_t take = std::min(candidates.size(), sz(k));
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), [&](int a, int b) {
                      if (weights[sz(a)] != weights[sz(b)]) return weights[sz(a)] > weights[sz(b)];
                      return a < b;
                    });
  candidates.resize(take);
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

ExplicitMemory sparsify(const ReferenceKV& kv, const TokenWeights& weights, int k,
                        std::uint64_t id) {
  require(weights.n_layers == kv.n_layers && weights.n_kv_heads == kv.n_kv_heads &&
              weights.eligible.size() == sz(kv.n_total()),
          ErrorCode::kShape, "token weights do not belong to this reference");
  require(k > 0, ErrorCode::kInput, "k must be positive");
  const auto n_eligible =
      static_cast<int>(std::count(weights.eligible.begin(), weights.eligible.end(), true));
  const int n_sel = std::min(k, n_eligible);
  const std::size_t dh = sz(kv.head_dim);

  ExplicitMemory m;
  m.id = id;
  m.n_layers = kv.n_layers;
  m.n_kv_heads = kv.n_kv_heads;
  m.n_tokens = n_sel;
  m.head_dim = kv.head_dim;
  m.keys.resize(m.n_vectors() * dh);
  m.values.resize(m.n_vectors() * dh);
  m.positions.resize(m.n_vectors());

  for (int layer = 0; layer < kv.n_layers; ++layer) {
    for (int g = 0; g < kv.n_kv_heads; ++g) {
      const auto selected = select_top_k(weights.at(layer, g).w, weights.eligible, k);
      for (int s = 0; s < n_sel; ++s) {
        const int ref_pos = selected[sz(s)] - kv.prefix_len;
        const std::size_t dst = m.vector_index(layer, g, s);
        const std::size_t src = sz(g) * sz(kv.n_tokens) + sz(ref_pos);
        m.positions[dst] = ref_pos;
        std::copy_n(kv.keys[sz(layer)].data() + src * dh, dh, m.keys.data() + dst * dh);
        std::copy_n(kv.values[sz(layer)].data() + src * dh, dh, m.values.data() + dst * dh);
      }
    }
  }
  return m;
}

ExplicitMemory write_memory(const Model& model, std::span<const Token> ref_tokens,
                            WeightMode mode, std::uint64_t id) {
  const ReferenceKV kv = model.encode_reference_kv(ref_tokens);
  const TokenWeights weights = compute_token_weights(kv, mode);
  return sparsify(kv, weights, model.config().mem_tokens, id);
}

}  // namespace em3
