#include "em3/model.h"

#include <cmath>
#include <random>
#include <string>

#include "em3/binary_io.h"
#include "em3/error.h"
#include "em3/rope.h"

namespace em3 {
namespace {

constexpr std::string_view kModelMagic = "EM3M";
constexpr std::uint16_t kModelVersion = 1;

// y[t][o] = sum_i x[t][i] * w[o][i]
void matmul_rows(const float* x, int n, int in, const float* w, int out, float* y) {
  for (int t = 0; t < n; ++t) {
    const float* xr = x + static_cast<std::size_t>(t) * in;
    float* yr = y + static_cast<std::size_t>(t) * out;
    for (int o = 0; o < out; ++o) {
      const float* wr = w + static_cast<std::size_t>(o) * in;
      float acc = 0.0f;
      for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
}

float dot(const float* a, const float* b, int n) {
  float acc = 0.0f;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

std::vector<float> random_normal(std::size_t n, float stddev, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> out(n);
  for (float& x : out) x = dist(rng) * stddev;
  return out;
}

std::size_t sz(int a) { return static_cast<std::size_t>(a); }

struct ParamShapes {
  std::size_t embedding, wq, wk, wo, gate, down;
};

ParamShapes shapes_of(const ModelConfig& c) {
  const std::size_t d = sz(c.hidden_dim);
  const std::size_t kv = sz(c.n_kv_heads) * sz(c.head_dim);
  return {sz(c.n_vocab) * d, d * d, kv * d, d * d, sz(c.mlp_width) * d, d * sz(c.mlp_width)};
}

void check_params(const ModelConfig& c, const ModelParams& p) {
  const auto s = shapes_of(c);
  const std::size_t d = sz(c.hidden_dim);
  auto expect = [](bool ok, const std::string& what) {
    require(ok, ErrorCode::kShape, "parameter shape mismatch: " + what);
  };
  expect(p.embedding.size() == s.embedding, "embedding");
  expect(p.layers.size() == sz(c.n_layers), "layer count");
  for (const auto& l : p.layers) {
    expect(l.attn_norm.size() == d && l.mlp_norm.size() == d, "norm");
    expect(l.wq.size() == s.wq && l.wo.size() == s.wo, "W_Q/W_O");
    expect(l.wk.size() == s.wk && l.wv.size() == s.wk, "W_K/W_V");
    expect(l.w_gate.size() == s.gate && l.w_up.size() == s.gate && l.w_down.size() == s.down,
           "MLP");
  }
  expect(p.final_norm.size() == d, "final norm");
  expect(p.lm_head.size() == s.embedding, "lm head");
}

template <typename Fn>
void for_each_tensor(const ModelParams& p, Fn&& fn) {
  fn(p.embedding);
  for (const auto& l : p.layers) {
    fn(l.attn_norm);
    fn(l.wq);
    fn(l.wk);
    fn(l.wv);
    fn(l.wo);
    fn(l.mlp_norm);
    fn(l.w_gate);
    fn(l.w_up);
    fn(l.w_down);
  }
  fn(p.final_norm);
  fn(p.lm_head);
}

template <typename Fn>
void for_each_tensor_mut(ModelParams& p, Fn&& fn) {
  fn(p.embedding);
  for (auto& l : p.layers) {
    fn(l.attn_norm);
    fn(l.wq);
    fn(l.wk);
    fn(l.wv);
    fn(l.wo);
    fn(l.mlp_norm);
    fn(l.w_gate);
    fn(l.w_up);
    fn(l.w_down);
  }
  fn(p.final_norm);
  fn(p.lm_head);
}

ModelParams allocate_params(const ModelConfig& c) {
  const auto s = shapes_of(c);
  const std::size_t d = sz(c.hidden_dim);
  ModelParams p;
  p.embedding.resize(s.embedding);
  p.layers.resize(sz(c.n_layers));
  for (auto& l : p.layers) {
    l.attn_norm.resize(d);
    l.wq.resize(s.wq);
    l.wk.resize(s.wk);
    l.wv.resize(s.wk);
    l.wo.resize(s.wo);
    l.mlp_norm.resize(d);
    l.w_gate.resize(s.gate);
    l.w_up.resize(s.gate);
    l.w_down.resize(s.down);
  }
  p.final_norm.resize(d);
  p.lm_head.resize(s.embedding);
  return p;
}

}  // namespace

KVCache::KVCache(int n_layers, int n_kv_heads, int head_dim)
    : layers_(sz(n_layers)), n_kv_heads_(n_kv_heads), head_dim_(head_dim) {}

int KVCache::n_tokens(int layer) const {
  if (layers_.empty()) return 0;
  return static_cast<int>(layers_.at(sz(layer)).positions.size());
}

int KVCache::last_position() const {
  if (empty()) return -1;
  return layers_[0].positions.back();
}

std::span<const float> KVCache::key(int layer, int token, int kv_head) const {
  const auto& l = layers_[sz(layer)];
  return {l.keys.data() + (sz(token) * sz(n_kv_heads_) + sz(kv_head)) * sz(head_dim_),
          sz(head_dim_)};
}

std::span<const float> KVCache::value(int layer, int token, int kv_head) const {
  const auto& l = layers_[sz(layer)];
  return {l.values.data() + (sz(token) * sz(n_kv_heads_) + sz(kv_head)) * sz(head_dim_),
          sz(head_dim_)};
}

void KVCache::append(int layer, std::span<const int> positions, std::span<const float> keys,
                     std::span<const float> values) {
  require(layer >= 0 && layer < n_layers(), ErrorCode::kState, "cache has no layer " +
                                                                   std::to_string(layer));
  const std::size_t row = sz(n_kv_heads_) * sz(head_dim_);
  require(keys.size() == positions.size() * row && values.size() == keys.size(),
          ErrorCode::kShape, "cache append with inconsistent key/value sizes");
  auto& l = layers_[sz(layer)];
  int prev = l.positions.empty() ? -1 : l.positions.back();
  for (int p : positions) {
    require(p > prev, ErrorCode::kState,
            "positions must strictly increase (got " + std::to_string(p) + " after " +
                std::to_string(prev) + ")");
    prev = p;
  }
  l.positions.insert(l.positions.end(), positions.begin(), positions.end());
  l.keys.insert(l.keys.end(), keys.begin(), keys.end());
  l.values.insert(l.values.end(), values.begin(), values.end());
}

void KVCache::clear() {
  for (auto& l : layers_) {
    l.positions.clear();
    l.keys.clear();
    l.values.clear();
  }
}

Model::Model(ModelConfig config, ModelParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  Fnv1a h;
  h.update_u64(config_.hash());
  for_each_tensor(params_, [&](const std::vector<float>& t) { h.update_f32s(t); });
  fingerprint_ = h.digest();
}

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = sz(config.hidden_dim);
  const float in_d = 1.0f / std::sqrt(static_cast<float>(d));
  const float in_w = 1.0f / std::sqrt(static_cast<float>(config.mlp_width));
  const auto s = shapes_of(config);

  ModelParams p;
  p.embedding = random_normal(s.embedding, 1.0f, rng);
  p.layers.resize(sz(config.n_layers));
  for (auto& l : p.layers) {
    l.attn_norm.assign(d, 1.0f);
    l.wq = random_normal(s.wq, in_d, rng);
    l.wk = random_normal(s.wk, in_d, rng);
    l.wv = random_normal(s.wk, in_d, rng);
    l.wo = random_normal(s.wo, in_d, rng);
    l.mlp_norm.assign(d, 1.0f);
    l.w_gate = random_normal(s.gate, in_d, rng);
    l.w_up = random_normal(s.gate, in_d, rng);
    l.w_down = random_normal(s.down, in_w, rng);
  }
  p.final_norm.assign(d, 1.0f);
  p.lm_head = random_normal(s.embedding, in_d, rng);
  return Model(config, std::move(p));
}

Model Model::from_params(const ModelConfig& config, ModelParams params) {
  config.validate();
  check_params(config, params);
  return Model(config, std::move(params));
}

std::vector<std::uint8_t> Model::serialize() const {
  ByteWriter w;
  w.put_magic(kModelMagic);
  w.put_u16(kModelVersion);
  const auto& c = config_;
  for (int v : {c.n_layers, c.n_heads, c.n_kv_heads, c.head_dim, c.hidden_dim, c.mlp_width,
                c.n_vocab, c.n_mem_layers, c.ref_len, c.mem_tokens, c.chunk_len,
                c.refs_per_chunk, c.bos_ctx_token}) {
    w.put_i32(v);
  }
  w.put_i32(static_cast<std::int32_t>(c.bos_ref_tokens.size()));
  for (Token t : c.bos_ref_tokens) w.put_i32(t);
  w.put_f32(c.rope_base);
  w.put_f32(c.norm_eps);
  for_each_tensor(params_, [&](const std::vector<float>& t) { w.put_f32s(t); });
  return std::move(w).take();
}

Model Model::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kModelMagic, "model checkpoint");
  const std::uint16_t version = r.get_u16();
  require(version == kModelVersion, ErrorCode::kCompatibility,
          "unsupported checkpoint version " + std::to_string(version));
  ModelConfig c;
  for (int* f : {&c.n_layers, &c.n_heads, &c.n_kv_heads, &c.head_dim, &c.hidden_dim,
                 &c.mlp_width, &c.n_vocab, &c.n_mem_layers, &c.ref_len, &c.mem_tokens,
                 &c.chunk_len, &c.refs_per_chunk}) {
    *f = r.get_i32();
  }
  c.bos_ctx_token = r.get_i32();
  const std::int32_t n_bos = r.get_i32();
  require(n_bos >= 0 && n_bos < 4096, ErrorCode::kFormat, "implausible BOS length");
  c.bos_ref_tokens.resize(sz(n_bos));
  for (Token& t : c.bos_ref_tokens) t = r.get_i32();
  c.rope_base = r.get_f32();
  c.norm_eps = r.get_f32();
  c.validate();
  ModelParams p = allocate_params(c);
  for_each_tensor_mut(p, [&](std::vector<float>& t) { r.get_f32s(t); });
  require(r.remaining() == 0, ErrorCode::kFormat, "trailing bytes in checkpoint");
  return Model(c, std::move(p));
}

Model Model::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

void Model::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

std::vector<float> Model::rms_norm(std::span<const float> h, std::span<const float> scale,
                                   int n) const {
  const int d = config_.hidden_dim;
  std::vector<float> out(h.size());
  for (int t = 0; t < n; ++t) {
    const float* x = h.data() + sz(t) * sz(d);
    float ss = 0.0f;
    for (int i = 0; i < d; ++i) ss += x[i] * x[i];
    const float inv = 1.0f / std::sqrt(ss / static_cast<float>(d) + config_.norm_eps);
    float* y = out.data() + sz(t) * sz(d);
    for (int i = 0; i < d; ++i) y[i] = x[i] * inv * scale[sz(i)];
  }
  return out;
}

Model::Projections Model::project(int layer, std::span<const float> x, int n) const {
  const auto& lp = params_.layers[sz(layer)];
  const int d = config_.hidden_dim;
  const int q_dim = config_.n_heads * config_.head_dim;
  const int kv_dim = config_.n_kv_heads * config_.head_dim;
  Projections p;
  p.q.resize(sz(n) * sz(q_dim));
  p.k.resize(sz(n) * sz(kv_dim));
  p.v.resize(sz(n) * sz(kv_dim));
  matmul_rows(x.data(), n, d, lp.wq.data(), q_dim, p.q.data());
  matmul_rows(x.data(), n, d, lp.wk.data(), kv_dim, p.k.data());
  matmul_rows(x.data(), n, d, lp.wv.data(), kv_dim, p.v.data());
  return p;
}

std::vector<float> Model::attend(int layer, Projections& proj, std::span<const int> positions,
                                 KVCache& cache, MemoryRefs memories,
                                 AttentionProbe* probe) const {
  const int n = static_cast<int>(positions.size());
  const int H = config_.n_heads;
  const int Hkv = config_.n_kv_heads;
  const int dh = config_.head_dim;
  const std::size_t udh = sz(dh);

  for (int t = 0; t < n; ++t) {
    for (int h = 0; h < H; ++h) {
      rope_rotate(std::span<float>(proj.q.data() + (sz(t) * sz(H) + sz(h)) * udh, udh),
                  positions[sz(t)], config_.rope_base);
    }
    for (int g = 0; g < Hkv; ++g) {
      rope_rotate(std::span<float>(proj.k.data() + (sz(t) * sz(Hkv) + sz(g)) * udh, udh),
                  positions[sz(t)], config_.rope_base);
    }
  }
  cache.append(layer, positions, proj.k, proj.v);

  const int n_ctx = cache.n_tokens(layer);
  const auto ctx_pos = cache.positions(layer);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const int context_start = config_.context_start();

  std::vector<float> heads(sz(n) * sz(H) * udh, 0.0f);
  std::vector<float> scores;
  for (int t = 0; t < n; ++t) {
    const bool sees_memory = positions[sz(t)] >= context_start;
    for (int h = 0; h < H; ++h) {
      const int g = kv_head_for(h);
      const float* q = proj.q.data() + (sz(t) * sz(H) + sz(h)) * udh;
      scores.clear();
      const float* first_mem = nullptr;
      if (sees_memory) {
        for (const ExplicitMemory* m : memories) {
          for (int j = 0; j < m->n_tokens; ++j) {
            const float* k = m->key(layer, g, j).data();
            if (!first_mem) first_mem = k;
            scores.push_back(dot(q, k, dh) * scale);
          }
        }
      }
      const std::size_t n_mem = scores.size();
      int n_visible = 0;
      while (n_visible < n_ctx && ctx_pos[sz(n_visible)] <= positions[sz(t)]) {
        scores.push_back(dot(q, cache.key(layer, n_visible, g).data(), dh) * scale);
        ++n_visible;
      }

      float max_s = scores[0];
      for (float s : scores) max_s = std::max(max_s, s);
      float sum = 0.0f;
      for (float& s : scores) {
        s = std::exp(s - max_s);
        sum += s;
      }
      const float inv = 1.0f / sum;
      for (float& s : scores) s *= inv;

      float* out = heads.data() + (sz(t) * sz(H) + sz(h)) * udh;
      std::size_t idx = 0;
      if (sees_memory) {
        for (const ExplicitMemory* m : memories) {
          for (int j = 0; j < m->n_tokens; ++j, ++idx) {
            const float* v = m->value(layer, g, j).data();
            for (int i = 0; i < dh; ++i) out[i] += scores[idx] * v[i];
          }
        }
      }
      for (int c = 0; c < n_visible; ++c, ++idx) {
        const float* v = cache.value(layer, c, g).data();
        for (int i = 0; i < dh; ++i) out[i] += scores[idx] * v[i];
      }

      if (probe) {
        AttentionProbe::Row row;
        row.token = t;
        row.head = h;
        row.kv_head = g;
        row.n_memory_keys = static_cast<int>(n_mem);
        row.weights = scores;
        row.first_memory_key = first_mem;
        row.first_context_key = cache.key(layer, 0, g).data();
        probe->rows.push_back(std::move(row));
      }
    }
  }

  const int d = config_.hidden_dim;
  std::vector<float> y(sz(n) * sz(d));
  matmul_rows(heads.data(), n, H * dh, params_.layers[sz(layer)].wo.data(), d, y.data());
  return y;
}

void Model::add_mlp(int layer, std::span<float> h, int n) const {
  const auto& lp = params_.layers[sz(layer)];
  const int d = config_.hidden_dim;
  const int W = config_.mlp_width;
  const auto xn = rms_norm(h, lp.mlp_norm, n);
  std::vector<float> gate(sz(n) * sz(W));
  std::vector<float> up(sz(n) * sz(W));
  matmul_rows(xn.data(), n, d, lp.w_gate.data(), W, gate.data());
  matmul_rows(xn.data(), n, d, lp.w_up.data(), W, up.data());
  for (std::size_t i = 0; i < gate.size(); ++i) {
    const float g = gate[i];
    gate[i] = g / (1.0f + std::exp(-g)) * up[i];
  }
  std::vector<float> down(sz(n) * sz(d));
  matmul_rows(gate.data(), n, W, lp.w_down.data(), d, down.data());
  for (std::size_t i = 0; i < down.size(); ++i) h[i] += down[i];
}

std::vector<float> Model::attention_with_memory(int layer, std::span<const float> x,
                                                std::span<const int> positions, KVCache& cache,
                                                MemoryRefs memories,
                                                AttentionProbe* probe) const {
  require(layer >= 0 && layer < config_.n_layers, ErrorCode::kInput, "layer out of range");
  const int n = static_cast<int>(positions.size());
  require(n > 0, ErrorCode::kInput, "attention needs at least one token");
  require(x.size() == sz(n) * sz(config_.hidden_dim), ErrorCode::kShape,
          "attention input must be [n][d]");
  if (!memories.empty()) {
    require(layer < config_.n_mem_layers, ErrorCode::kUsage,
            "memories passed to non-memory layer " + std::to_string(layer));
    for (const ExplicitMemory* m : memories) {
      require(m != nullptr, ErrorCode::kInput, "null memory");
      m->check_shape(config_);
    }
  }
  require(cache.n_layers() > layer, ErrorCode::kState, "cache does not cover layer");
  Projections proj = project(layer, x, n);
  return attend(layer, proj, positions, cache, memories, probe);
}

Logits Model::forward(std::span<const Token> tokens, std::span<const int> positions,
                      KVCache& cache, MemoryRefs memories) const {
  const int n = static_cast<int>(tokens.size());
  require(n > 0, ErrorCode::kInput, "forward needs at least one token");
  require(positions.size() == tokens.size(), ErrorCode::kInput,
          "one position per token required");
  require(cache.n_layers() == config_.n_layers, ErrorCode::kState,
          "cache layer count does not match model");
  require(positions[0] > cache.last_position(), ErrorCode::kState,
          "positions must continue after the cached context");
  for (const ExplicitMemory* m : memories) {
    require(m != nullptr, ErrorCode::kInput, "null memory");
    m->check_shape(config_);
  }

  const int d = config_.hidden_dim;
  std::vector<float> h(sz(n) * sz(d));
  for (int t = 0; t < n; ++t) {
    const Token id = tokens[sz(t)];
    require(id >= 0 && id < config_.n_vocab, ErrorCode::kInput,
            "token id " + std::to_string(id) + " outside vocabulary");
    std::copy_n(params_.embedding.data() + sz(id) * sz(d), d, h.data() + sz(t) * sz(d));
  }

  for (int layer = 0; layer < config_.n_layers; ++layer) {
    const auto xn = rms_norm(h, params_.layers[sz(layer)].attn_norm, n);
    Projections proj = project(layer, xn, n);
    const MemoryRefs layer_mem = layer < config_.n_mem_layers ? memories : MemoryRefs{};
    const auto a = attend(layer, proj, positions, cache, layer_mem, nullptr);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += a[i];
    add_mlp(layer, h, n);
  }

  const auto hn = rms_norm(h, params_.final_norm, n);
  Logits logits;
  logits.n_rows = n;
  logits.n_vocab = config_.n_vocab;
  logits.data.resize(sz(n) * sz(config_.n_vocab));
  matmul_rows(hn.data(), n, d, params_.lm_head.data(), config_.n_vocab, logits.data.data());
  return logits;
}

Logits Model::begin_sequence(KVCache& cache) const {
  if (cache.n_layers() != config_.n_layers) cache = KVCache(config_);
  cache.clear();
  std::vector<Token> tokens = config_.bos_ref_tokens;
  std::vector<int> positions;
  for (int i = 0; i < config_.prefix_len(); ++i) positions.push_back(i);
  tokens.push_back(config_.bos_ctx_token);
  positions.push_back(config_.context_start());
  return forward(tokens, positions, cache);
}

Logits Model::forward_chunk(std::span<const Token> tokens, KVCache& cache, MemoryRefs memories,
                            int max_len) const {
  const int limit = max_len > 0 ? max_len : config_.chunk_len;
  require(!tokens.empty(), ErrorCode::kInput, "empty chunk");
  require(static_cast<int>(tokens.size()) <= limit, ErrorCode::kInput,
          "chunk of " + std::to_string(tokens.size()) + " tokens exceeds limit " +
              std::to_string(limit));
  require(cache.last_position() >= config_.context_start(), ErrorCode::kState,
          "sequence not started; call begin_sequence first");
  std::vector<int> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] = cache.last_position() + 1 + static_cast<int>(i);
  }
  return forward(tokens, positions, cache, memories);
}

ReferenceKV Model::encode_reference_kv(std::span<const Token> ref_tokens) const {
  require(static_cast<int>(ref_tokens.size()) <= config_.ref_len, ErrorCode::kInput,
          "reference of " + std::to_string(ref_tokens.size()) + " tokens exceeds l_ref " +
              std::to_string(config_.ref_len));
  std::vector<Token> tokens = config_.bos_ref_tokens;
  tokens.insert(tokens.end(), ref_tokens.begin(), ref_tokens.end());
  const int n = static_cast<int>(tokens.size());
  const int b = config_.prefix_len();
  const int d = config_.hidden_dim;
  const int H = config_.n_heads;
  const int Hkv = config_.n_kv_heads;
  const std::size_t dh = sz(config_.head_dim);
  const int L_mem = config_.n_mem_layers;

  std::vector<int> positions(sz(n));
  for (int i = 0; i < n; ++i) positions[sz(i)] = i;

  std::vector<float> h(sz(n) * sz(d));
  for (int t = 0; t < n; ++t) {
    const Token id = tokens[sz(t)];
    require(id >= 0 && id < config_.n_vocab, ErrorCode::kInput,
            "token id " + std::to_string(id) + " outside vocabulary");
    std::copy_n(params_.embedding.data() + sz(id) * sz(d), d, h.data() + sz(t) * sz(d));
  }

  ReferenceKV out;
  out.n_layers = L_mem;
  out.n_heads = H;
  out.n_kv_heads = Hkv;
  out.head_dim = config_.head_dim;
  out.prefix_len = b;
  out.n_tokens = n - b;
  out.keys.resize(sz(L_mem));
  out.values.resize(sz(L_mem));
  out.raw_queries.resize(sz(L_mem));
  out.raw_keys.resize(sz(L_mem));

  KVCache local(L_mem, Hkv, config_.head_dim);
  for (int layer = 0; layer < L_mem; ++layer) {
    const auto xn = rms_norm(h, params_.layers[sz(layer)].attn_norm, n);
    Projections proj = project(layer, xn, n);

    auto& rq = out.raw_queries[sz(layer)];
    auto& rk = out.raw_keys[sz(layer)];
    rq.resize(sz(H) * sz(n) * dh);
    rk.resize(sz(Hkv) * sz(n) * dh);
    for (int t = 0; t < n; ++t) {
      for (int hh = 0; hh < H; ++hh) {
        std::copy_n(proj.q.data() + (sz(t) * sz(H) + sz(hh)) * dh, dh,
                    rq.data() + (sz(hh) * sz(n) + sz(t)) * dh);
      }
      for (int g = 0; g < Hkv; ++g) {
        std::copy_n(proj.k.data() + (sz(t) * sz(Hkv) + sz(g)) * dh, dh,
                    rk.data() + (sz(g) * sz(n) + sz(t)) * dh);
      }
    }

    const auto a = attend(layer, proj, positions, local, {}, nullptr);

    auto& keys = out.keys[sz(layer)];
    auto& values = out.values[sz(layer)];
    keys.resize(sz(Hkv) * sz(out.n_tokens) * dh);
    values.resize(keys.size());
    for (int j = 0; j < out.n_tokens; ++j) {
      const int t = b + j;
      for (int g = 0; g < Hkv; ++g) {
        std::copy_n(proj.k.data() + (sz(t) * sz(Hkv) + sz(g)) * dh, dh,
                    keys.data() + (sz(g) * sz(out.n_tokens) + sz(j)) * dh);
        std::copy_n(proj.v.data() + (sz(t) * sz(Hkv) + sz(g)) * dh, dh,
                    values.data() + (sz(g) * sz(out.n_tokens) + sz(j)) * dh);
      }
    }

    for (std::size_t i = 0; i < h.size(); ++i) h[i] += a[i];
    if (layer < L_mem - 1) add_mlp(layer, h, n);
  }
  return out;
}

}  // namespace em3
