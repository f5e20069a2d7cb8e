#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "em3/error.h"
#include "em3/model.h"
#include "oracles/dense_model.h"
#include "oracles/fixtures.h"

namespace em3 {
namespace {

using testing::random_memory;
using testing::random_vector;
using testing::small_config;

std::vector<int> iota_positions(int from, int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = from + i;
  return p;
}

// Prefix positions, then `n_ctx` context positions from the context start.
std::vector<int> sequence_positions(const ModelConfig& c, int n_ctx) {
  auto p = iota_positions(0, c.prefix_len());
  const auto ctx = iota_positions(c.context_start(), n_ctx);
  p.insert(p.end(), ctx.begin(), ctx.end());
  return p;
}

std::vector<Token> sequence_tokens(const ModelConfig& c, std::mt19937_64& rng, int n_ctx) {
  std::vector<Token> t = c.bos_ref_tokens;
  t.push_back(c.bos_ctx_token);
  std::uniform_int_distribution<Token> tok(0, 255);
  for (int i = 1; i < n_ctx; ++i) t.push_back(tok(rng));
  return t;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kUsage;
}

TEST(Model, InitIsDeterministic) {
  const auto a = Model::init(ModelConfig::toy(), 0);
  const auto b = Model::init(ModelConfig::toy(), 0);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  const auto c = Model::init(ModelConfig::toy(), 1);
  EXPECT_NE(a.fingerprint(), c.fingerprint());
}

TEST(Model, InitRejectsBadConfig) {
  auto c = ModelConfig::toy();
  c.n_kv_heads = 3;
  EXPECT_EQ(code_of([&] { Model::init(c, 0); }), ErrorCode::kConfig);
}

TEST(Model, CheckpointRoundTrip) {
  const auto m = Model::init(small_config(2, 2, 1, 8), 5);
  testing::TempDir dir;
  m.save(dir / "m.em3");
  const auto back = Model::load(dir / "m.em3");
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.params(), m.params());
  EXPECT_EQ(back.fingerprint(), m.fingerprint());

  auto bytes = m.serialize();
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "EM3M");
  bytes[0] = 'X';
  EXPECT_EQ(code_of([&] { Model::deserialize(bytes); }), ErrorCode::kFormat);
  auto truncated = m.serialize();
  truncated.resize(truncated.size() - 3);
  EXPECT_EQ(code_of([&] { Model::deserialize(truncated); }), ErrorCode::kFormat);
}

TEST(KVCache, PositionsMustIncrease) {
  KVCache cache(2, 1, 4);
  const std::vector<float> kv(8, 0.5f);
  const std::vector<int> p = {3, 4};
  cache.append(0, p, kv, kv);
  EXPECT_EQ(cache.n_tokens(0), 2);
  EXPECT_EQ(code_of([&] { cache.append(0, p, kv, kv); }), ErrorCode::kState);
  const std::vector<float> short_v(4, 0.5f);
  EXPECT_EQ(code_of([&] { cache.append(1, p, kv, short_v); }), ErrorCode::kShape);
}

struct AttentionCase {
  ModelConfig config;
  std::uint64_t seed;
};

// Two calls (prefix, then context) through the cache against one dense matrix.
double attention_vs_oracle(const AttentionCase& tc, int n_memories, int n_ctx, int layer) {
  const auto& c = tc.config;
  const auto model = Model::init(c, tc.seed);
  std::mt19937_64 rng(tc.seed * 7919 + 1);
  std::vector<ExplicitMemory> mems;
  for (int i = 0; i < n_memories; ++i) mems.push_back(random_memory(c, rng, i));
  const auto refs = as_refs(mems);

  const auto positions = sequence_positions(c, n_ctx);
  const int n = static_cast<int>(positions.size());
  const auto x = random_vector(static_cast<std::size_t>(n) * c.hidden_dim, rng);
  const int b = c.prefix_len();
  const std::size_t split = static_cast<std::size_t>(b) * c.hidden_dim;

  KVCache cache(c);
  const std::span<const float> xs(x);
  const std::span<const int> ps(positions);
  model.attention_with_memory(layer, xs.first(split), ps.first(b), cache, refs);
  const auto got = model.attention_with_memory(layer, xs.subspan(split), ps.subspan(b), cache,
                                               refs);
  const auto want = oracle::dense_attention(model, layer, x, positions, b, refs);
  EXPECT_EQ(got.size(), want.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  return worst;
}

TEST(AttentionWithMemory, MatchesDenseOracleTwoMemoriesTenTokens) {
  const AttentionCase tc{ModelConfig::toy(), 11};
  for (int layer = 0; layer < tc.config.n_mem_layers; ++layer) {
    EXPECT_LT(attention_vs_oracle(tc, 2, 10, layer), 1e-5) << "layer " << layer;
  }
}

TEST(AttentionWithMemory, MatchesDenseOracleAcrossGrid) {
  for (int L : {2, 4}) {
    for (int H : {2, 4}) {
      for (int Hkv : {1, 2}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
          const AttentionCase tc{small_config(L, H, Hkv, 8), seed};
          EXPECT_LT(attention_vs_oracle(tc, 3, 7, 0), 1e-5)
              << "L=" << L << " H=" << H << " H_kv=" << Hkv << " seed=" << seed;
        }
      }
    }
  }
}

TEST(AttentionWithMemory, EmptyMemoriesIsPlainCausalAttention) {
  const AttentionCase tc{ModelConfig::toy(), 3};
  EXPECT_LT(attention_vs_oracle(tc, 0, 12, 0), 1e-5);
  // Non-memory layers with no memories follow the same path.
  EXPECT_LT(attention_vs_oracle(tc, 0, 12, tc.config.n_layers - 1), 1e-5);
}

TEST(AttentionWithMemory, SoftmaxRowsSumToOne) {
  const auto c = ModelConfig::toy();
  const auto model = Model::init(c, 2);
  std::mt19937_64 rng(2);
  std::vector<ExplicitMemory> mems = {random_memory(c, rng, 0), random_memory(c, rng, 1)};
  const auto positions = sequence_positions(c, 6);
  const auto x = random_vector(positions.size() * c.hidden_dim, rng);
  KVCache cache(c);
  AttentionProbe probe;
  model.attention_with_memory(0, x, positions, cache, as_refs(mems), &probe);
  ASSERT_EQ(probe.rows.size(), positions.size() * c.n_heads);
  for (const auto& row : probe.rows) {
    double s = 0.0;
    for (float w : row.weights) s += w;
    EXPECT_NEAR(s, 1.0, 1e-6);
    const bool in_context = positions[static_cast<std::size_t>(row.token)] >= c.context_start();
    EXPECT_EQ(row.n_memory_keys, in_context ? 2 * c.mem_tokens : 0);
  }
}

TEST(AttentionWithMemory, GqaHeadsShareKeyTensors) {
  const auto c = ModelConfig::toy();
  const auto model = Model::init(c, 4);
  std::mt19937_64 rng(4);
  std::vector<ExplicitMemory> mems = {random_memory(c, rng, 0)};
  const auto positions = sequence_positions(c, 4);
  const auto x = random_vector(positions.size() * c.hidden_dim, rng);
  KVCache cache(c);
  AttentionProbe probe;
  model.attention_with_memory(1, x, positions, cache, as_refs(mems), &probe);
  for (const auto& a : probe.rows) {
    EXPECT_EQ(a.kv_head, model.kv_head_for(a.head));
    for (const auto& b : probe.rows) {
      if (a.token != b.token || a.head == b.head) continue;
      const bool same_group = a.kv_head == b.kv_head;
      EXPECT_EQ(a.first_context_key == b.first_context_key, same_group);
      if (a.n_memory_keys > 0) {
        EXPECT_EQ(a.first_memory_key == b.first_memory_key, same_group);
      }
    }
  }
}

TEST(AttentionWithMemory, RejectsMisuse) {
  const auto c = ModelConfig::toy();
  const auto model = Model::init(c, 0);
  std::mt19937_64 rng(0);
  std::vector<ExplicitMemory> mems = {random_memory(c, rng, 0)};
  const auto positions = sequence_positions(c, 2);
  const auto x = random_vector(positions.size() * c.hidden_dim, rng);
  KVCache cache(c);
  EXPECT_EQ(code_of([&] {
              model.attention_with_memory(c.n_mem_layers, x, positions, cache, as_refs(mems));
            }),
            ErrorCode::kUsage);
  auto wrong = mems;
  wrong[0].n_kv_heads = 1;
  EXPECT_EQ(code_of([&] { model.attention_with_memory(0, x, positions, cache, as_refs(wrong)); }),
            ErrorCode::kShape);
}

TEST(Forward, ChunkIsDeterministic) {
  const auto model = Model::init(ModelConfig::toy(), 0);
  const std::vector<Token> t = {65};
  KVCache a, b;
  model.begin_sequence(a);
  model.begin_sequence(b);
  EXPECT_EQ(model.forward_chunk(t, a).data, model.forward_chunk(t, b).data);
}

TEST(Forward, MatchesDenseOracleWithAndWithoutMemories) {
  for (const auto& c : {ModelConfig::toy(), small_config(4, 4, 2, 8)}) {
    const auto model = Model::init(c, 9);
    std::mt19937_64 rng(9);
    std::vector<ExplicitMemory> mems = {random_memory(c, rng, 0), random_memory(c, rng, 1)};
    for (bool with_memory : {false, true}) {
      const auto refs = with_memory ? as_refs(mems) : std::vector<const ExplicitMemory*>{};
      const auto tokens = sequence_tokens(c, rng, 1 + c.chunk_len);
      KVCache cache;
      const auto head = model.begin_sequence(cache);
      const std::span<const Token> ts(tokens);
      const auto chunk = model.forward_chunk(ts.subspan(tokens.size() - c.chunk_len), cache, refs);
      // The standard BOS goes through begin_sequence, so only the chunk sees memories.
      oracle::DenseOptions opt;
      opt.memory_from = c.context_start() + 1;
      const auto want = oracle::dense_run(model, tokens, sequence_positions(c, 1 + c.chunk_len),
                                          refs, opt);
      std::vector<float> got = head.data;
      got.insert(got.end(), chunk.data.begin(), chunk.data.end());
      ASSERT_EQ(got.size(), want.logits.size());
      double worst = 0.0;
      for (std::size_t i = 0; i < got.size(); ++i) {
        worst = std::max(worst, std::abs(got[i] - want.logits[i]));
      }
      EXPECT_LT(worst, 1e-4) << "memory=" << with_memory;
    }
  }
}

TEST(Forward, GreedyWithoutMemoriesEqualsPlainPath) {
  const auto c = ModelConfig::toy();
  const auto model = Model::init(c, 6);
  // Memory-free code path: whole sequence through forward() in one call.
  auto argmax = [](std::span<const float> r) {
    return static_cast<Token>(std::max_element(r.begin(), r.end()) - r.begin());
  };
  KVCache cache;
  auto logits = model.begin_sequence(cache);
  std::vector<Token> tokens = c.bos_ref_tokens;
  tokens.push_back(c.bos_ctx_token);
  std::vector<Token> greedy;
  for (int i = 0; i < 12; ++i) {
    const Token next = argmax(logits.last());
    greedy.push_back(next);
    logits = model.forward_chunk(std::span<const Token>(&next, 1), cache, {});
  }
  std::vector<Token> plain;
  std::vector<Token> seq = tokens;
  for (int i = 0; i < 12; ++i) {
    KVCache fresh(c);
    const auto pos = sequence_positions(c, static_cast<int>(seq.size()) - c.prefix_len());
    const auto l = model.forward(seq, pos, fresh);
    plain.push_back(argmax(l.last()));
    seq.push_back(plain.back());
  }
  EXPECT_EQ(greedy, plain);
}

TEST(Forward, PrefixLogitsIgnoreMemories) {
  const auto c = ModelConfig::toy();
  const auto model = Model::init(c, 8);
  std::mt19937_64 rng(8);
  std::vector<ExplicitMemory> mems = {random_memory(c, rng, 0)};
  const auto tokens = sequence_tokens(c, rng, 5);
  const auto pos = sequence_positions(c, 5);
  KVCache a(c), b(c);
  const auto plain = model.forward(tokens, pos, a);
  const auto with = model.forward(tokens, pos, b, as_refs(mems));
  for (int t = 0; t < c.prefix_len(); ++t) {
    const auto x = plain.row(t), y = with.row(t);
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin())) << "row " << t;
  }
  const auto x = plain.last(), y = with.last();
  EXPECT_FALSE(std::equal(x.begin(), x.end(), y.begin()));
}

TEST(Forward, ChunkRulesAreEnforced) {
  const auto c = ModelConfig::toy();
  const auto model = Model::init(c, 0);
  KVCache cache(c);
  const std::vector<Token> one = {1};
  EXPECT_EQ(code_of([&] { model.forward_chunk(one, cache); }), ErrorCode::kState);
  model.begin_sequence(cache);
  const std::vector<Token> too_long(static_cast<std::size_t>(c.chunk_len) + 1, 5);
  EXPECT_EQ(code_of([&] { model.forward_chunk(too_long, cache); }), ErrorCode::kInput);
  const auto logits = model.forward_chunk(std::span<const Token>(too_long).first(4), cache);
  EXPECT_EQ(logits.n_rows, 4);
  EXPECT_EQ(logits.n_vocab, c.n_vocab);
  EXPECT_EQ(cache.last_position(), c.context_start() + 4);
}

TEST(EncodeReference, MatchesDenseOracleLayerByLayer) {
  const auto c = ModelConfig::toy();
  const auto model = Model::init(c, 12);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<Token> tok(0, 255);
  std::vector<Token> ref(20);
  for (auto& t : ref) t = tok(rng);
  const auto kv = model.encode_reference_kv(ref);

  std::vector<Token> full = c.bos_ref_tokens;
  full.insert(full.end(), ref.begin(), ref.end());
  const int n = static_cast<int>(full.size());
  const int b = c.prefix_len();
  const auto want = oracle::dense_run(model, full, iota_positions(0, n), {},
                                      {c.n_mem_layers, c.n_mem_layers - 1, false});

  ASSERT_EQ(kv.n_layers, c.n_mem_layers);
  EXPECT_EQ(kv.n_tokens, 20);
  EXPECT_EQ(kv.prefix_len, b);
  const int dh = c.head_dim, Hkv = c.n_kv_heads, H = c.n_heads;
  double worst = 0.0;
  for (int l = 0; l < c.n_mem_layers; ++l) {
    ASSERT_EQ(kv.keys[l].size(), static_cast<std::size_t>(Hkv) * 20 * dh);
    for (int g = 0; g < Hkv; ++g) {
      for (int j = 0; j < 20; ++j) {
        for (int e = 0; e < dh; ++e) {
          const std::size_t ours = (static_cast<std::size_t>(g) * 20 + j) * dh + e;
          const std::size_t theirs = ((static_cast<std::size_t>(b) + j) * Hkv + g) * dh + e;
          worst = std::max(worst, std::abs(kv.keys[l][ours] - want.keys[l][theirs]));
          worst = std::max(worst, std::abs(kv.values[l][ours] - want.values[l][theirs]));
        }
      }
      for (int t = 0; t < n; ++t) {
        for (int e = 0; e < dh; ++e) {
          worst = std::max(worst,
                           std::abs(kv.raw_keys[l][(static_cast<std::size_t>(g) * n + t) * dh + e] -
                                    want.raw_keys[l][(static_cast<std::size_t>(t) * Hkv + g) * dh + e]));
        }
      }
    }
    for (int h = 0; h < H; ++h) {
      for (int t = 0; t < n; ++t) {
        for (int e = 0; e < dh; ++e) {
          worst = std::max(worst,
                           std::abs(kv.raw_queries[l][(static_cast<std::size_t>(h) * n + t) * dh + e] -
                                    want.queries[l][(static_cast<std::size_t>(t) * H + h) * dh + e]));
        }
      }
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(EncodeReference, ReferencesAreIndependent) {
  const auto model = Model::init(ModelConfig::toy(), 1);
  const std::vector<Token> a = {10, 20, 30, 40}, b = {99, 98, 97};
  const auto first = model.encode_reference_kv(a);
  model.encode_reference_kv(b);
  const auto again = model.encode_reference_kv(a);
  EXPECT_EQ(first.keys, again.keys);
  EXPECT_EQ(first.values, again.values);
}

TEST(EncodeReference, RejectsLongReference) {
  const auto model = Model::init(ModelConfig::toy(), 1);
  const std::vector<Token> ref(33, 7);
  EXPECT_EQ(code_of([&] { model.encode_reference_kv(ref); }), ErrorCode::kInput);
}

}  // namespace
}  // namespace em3
