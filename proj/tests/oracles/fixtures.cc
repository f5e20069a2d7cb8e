#include "oracles/fixtures.h"

#include <atomic>
#include <unistd.h>

#include "em3/tokenizer.h"

namespace em3::testing {

ModelConfig small_config(int L, int H, int H_kv, int d_h) {
  ModelConfig c = ModelConfig::toy();
  c.n_layers = L;
  c.n_heads = H;
  c.n_kv_heads = H_kv;
  c.head_dim = d_h;
  c.hidden_dim = H * d_h;
  c.mlp_width = 32;
  c.n_vocab = 300;
  c.n_mem_layers = std::max(1, L / 2);
  c.ref_len = 16;
  c.mem_tokens = 4;
  c.chunk_len = 8;
  c.refs_per_chunk = 3;
  return c;
}

std::vector<float> random_vector(std::size_t n, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<float> dist(0.0f, static_cast<float>(stddev));
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

ExplicitMemory random_memory(const ModelConfig& config, std::mt19937_64& rng, std::uint64_t id,
                             int n_tokens) {
  ExplicitMemory m;
  m.id = id;
  m.n_layers = config.n_mem_layers;
  m.n_kv_heads = config.n_kv_heads;
  m.n_tokens = n_tokens < 0 ? config.mem_tokens : n_tokens;
  m.head_dim = config.head_dim;
  m.keys = random_vector(m.n_vectors() * m.head_dim, rng);
  m.values = random_vector(m.n_vectors() * m.head_dim, rng);
  m.positions.resize(m.n_vectors());
  for (std::size_t v = 0; v < m.n_vectors(); ++v) {
    m.positions[v] = static_cast<std::int32_t>(v % static_cast<std::size_t>(m.n_tokens));
  }
  return m;
}

std::vector<std::string> toy_corpus(int n_lines, std::uint64_t seed) {
  static const char* const kWords[] = {
      "memory", "bank",   "vector", "token",  "cache",  "river",  "stone",  "light",
      "query",  "layer",  "sparse", "key",    "value",  "chunk",  "north",  "garden",
      "window", "signal", "market", "forest", "copper", "violet", "engine", "harbor",
      "pepper", "silver", "orbit",  "delta",  "falcon", "meadow", "tunnel", "quartz"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> word(0, 31), len(4, 14);
  std::vector<std::string> out;
  for (int i = 0; i < n_lines; ++i) {
    std::string line = "fact " + std::to_string(i) + ":";
    const int n = len(rng);
    for (int w = 0; w < n; ++w) {
      line += ' ';
      line += kWords[word(rng)];
    }
    out.push_back(line + '.');
  }
  return out;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("em3_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<std::vector<Token>> reference_pieces(const std::vector<std::string>& lines,
                                                 int ref_len) {
  const ByteTokenizer tok;
  std::vector<std::vector<Token>> out;
  for (const auto& line : lines) {
    const auto ids = tok.encode(line);
    for (std::size_t at = 0; at < ids.size(); at += static_cast<std::size_t>(ref_len)) {
      const std::size_t n = std::min(ids.size() - at, static_cast<std::size_t>(ref_len));
      out.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(at),
                       ids.begin() + static_cast<std::ptrdiff_t>(at + n));
    }
  }
  return out;
}

std::shared_ptr<EngineResources> Fixture::resources(bool warm, bool quantized,
                                                    std::size_t cache_capacity) const {
  auto res = std::make_shared<EngineResources>();
  res->model = model;
  res->index = index;
  res->embedder = std::make_shared<HashedNgramEmbedder>(index->dim());
  res->cache = std::make_shared<MemoryCache>(cache_capacity);
  res->bank = std::make_shared<MemoryBank>(
      model->config(), model->fingerprint(),
      quantized ? codebooks : std::optional<MemoryCodebooks>{});
  if (warm) {
    for (const auto& m : memories) res->bank->put(m);
  }
  return res;
}

Fixture make_fixture(const ModelConfig& config, int n_lines, std::uint64_t seed,
                     bool train_codebooks, WeightMode mode) {
  Fixture f;
  f.model = std::make_shared<const Model>(Model::init(config, seed));
  f.refs = reference_pieces(toy_corpus(n_lines, seed), config.ref_len);
  const HashedNgramEmbedder embedder;
  f.index = std::make_shared<RetrievalIndex>(embedder.dim());
  for (std::size_t id = 0; id < f.refs.size(); ++id) {
    f.index->add(id, embedder.embed(f.refs[id]), f.refs[id]);
    f.memories.push_back(write_memory(*f.model, f.refs[id], mode, id));
  }
  if (train_codebooks) {
    f.codebooks = train_memory_codebooks(f.memories, QuantizerGeometry::desk(config.head_dim),
                                         {20, seed});
  }
  return f;
}

}  // namespace em3::testing
