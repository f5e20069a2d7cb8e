#include "cli.h"

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "em3/bank_service.h"
#include "em3/binary_io.h"
#include "em3/cost_model.h"
#include "em3/engine.h"
#include "em3/error.h"
#include "em3/memory_bank.h"
#include "em3/memory_writer.h"
#include "em3/model.h"
#include "em3/quantizer.h"
#include "em3/retrieval.h"
#include "em3/tokenizer.h"

namespace em3::cli {
namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo:
    case ErrorCode::kFormat:
    case ErrorCode::kNotFound:
    case ErrorCode::kTransport:
    case ErrorCode::kProtocol:
      return kExitIo;
    case ErrorCode::kCompatibility:
      return kExitCompat;
    default:
      return kExitUsage;
  }
}

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    int extra = 0;
    if (c < 0x80) extra = 0;
    else if ((c & 0xE0) == 0xC0 && c >= 0xC2) extra = 1;
    else if ((c & 0xF0) == 0xE0) extra = 2;
    else if ((c & 0xF8) == 0xF0 && c <= 0xF4) extra = 3;
    else return false;
    if (i + extra >= s.size()) return false;
    for (int k = 1; k <= extra; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    }
    i += static_cast<std::size_t>(extra) + 1;
  }
  return true;
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

// References are split into consecutive l_ref-token pieces.
std::vector<std::vector<Token>> load_references(const std::filesystem::path& path, int ref_len) {
  const std::string text = read_text(path);
  const ByteTokenizer tok;
  std::vector<std::vector<Token>> pieces;
  std::size_t line_no = 0;
  std::size_t at = 0;
  while (at < text.size()) {
    const auto nl = text.find('\n', at);
    std::string_view line(text.data() + at, (nl == std::string::npos ? text.size() : nl) - at);
    at = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!valid_utf8(line)) {
      fail(ErrorCode::kIo, path.string() + ":" + std::to_string(line_no) + ": invalid UTF-8");
    }
    if (line.empty()) continue;
    const auto ids = tok.encode(line);
    for (std::size_t s = 0; s < ids.size(); s += static_cast<std::size_t>(ref_len)) {
      const auto e = std::min(ids.size(), s + static_cast<std::size_t>(ref_len));
      pieces.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(s),
                          ids.begin() + static_cast<std::ptrdiff_t>(e));
    }
  }
  return pieces;
}

std::vector<QuantLevel> parse_levels(const std::string& text) {
  std::vector<QuantLevel> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    require(x != std::string::npos, ErrorCode::kUsage,
            "level '" + item + "' is not SUBVECTORSxBITS");
    QuantLevel l;
    try {
      l.n_subvectors = std::stoi(item.substr(0, x));
      l.n_bits = std::stoi(item.substr(x + 1));
    } catch (const std::exception&) {
      fail(ErrorCode::kUsage, "level '" + item + "' is not SUBVECTORSxBITS");
    }
    out.push_back(l);
  }
  require(!out.empty(), ErrorCode::kUsage, "no quantizer levels given");
  return out;
}

void print_stats(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& kv) {
  out << "---\n";
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string join_tokens(std::span<const Token> t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(t[i]);
  }
  return s;
}

// Engine flags shared by infer and bench; each maps to an engine config key.
struct EngineFlags {
  std::string config;
  bool config_precedence = false;
  std::map<std::string, std::string> values;
  bool no_memory = false;

  void add(CLI::App* app) {
    app->add_option("--config", config, "Engine config file (key = value)");
    app->add_flag("--config-precedence", config_precedence,
                  "Let the config file override command-line flags");
    for (const auto& [flag, key, help] : kFlags) {
      app->add_option(flag, values[key], help);
    }
    app->add_flag("--no-memory", no_memory, "Disable memory retrieval");
  }

  EngineConfig resolve(CLI::App* app) const {
    std::vector<std::pair<std::string, std::string>> from_flags;
    for (const auto& [flag, key, help] : kFlags) {
      if (app->get_option(flag)->count() > 0) from_flags.emplace_back(key, values.at(key));
    }
    if (no_memory) from_flags.emplace_back("memory", "off");
    std::vector<std::pair<std::string, std::string>> from_file;
    std::filesystem::path base;
    if (!config.empty()) {
      from_file = EngineConfig::parse_pairs(read_text(config));
      base = std::filesystem::path(config).parent_path();
    }
    EngineConfig cfg;
    const auto apply = [&](const auto& pairs, const std::filesystem::path& dir) {
      for (const auto& [k, v] : pairs) cfg.set(k, v, dir);
    };
    if (config_precedence) {
      apply(from_flags, {});
      apply(from_file, base);
    } else {
      apply(from_file, base);
      apply(from_flags, {});
    }
    return cfg;
  }

  struct Flag {
    const char* flag;
    const char* key;
    const char* help;
  };
  static constexpr Flag kFlags[] = {
      {"--model", "model", "Model checkpoint"},
      {"--bank", "bank", "Memory bank file"},
      {"--index", "index", "Retrieval index file"},
      {"--codebook", "codebook", "Quantizer codebook file"},
      {"--mode", "mode", "warm | cold"},
      {"--weight-mode", "weight_mode", "exact | approximate"},
      {"--cache-capacity", "cache_capacity", "Memories cached in RAM"},
      {"--chunk-len", "chunk_len", "Tokens per retrieval chunk"},
      {"--n-refs", "n_refs", "Memories retrieved per chunk"},
      {"--filter-threshold", "filter_threshold", "Leakage filter threshold, 0 disables"},
      {"--bank-endpoint", "bank_endpoint", "host:port of a bank server"},
      {"--embedder-endpoint", "embedder_endpoint", "host:port of an embedding server"},
      {"--embedding-dim", "embedding_dim", "Embedding dimension"},
      {"--timeout-ms", "timeout_ms", "Remote timeout in milliseconds"},
      {"--tolerant", "tolerant", "on: remote failures give zero memories"},
  };
};

struct ModelFlags {
  int L = 8, H = 8, H_kv = 2, d_h = 16, d = 0, W = 128, vocab = 512;
  int L_mem = 0, l_ref = 32, l_mem = 4, l_chunk = 16, n_refs = 5;

  void add(CLI::App* app) {
    app->add_option("--L", L, "Transformer blocks");
    app->add_option("--H", H, "Query heads");
    app->add_option("--H-kv", H_kv, "Key-value heads");
    app->add_option("--d-h", d_h, "Head dimension");
    app->add_option("--d", d, "Hidden dimension (default H * d_h)");
    app->add_option("--W", W, "MLP width");
    app->add_option("--n-vocab", vocab, "Vocabulary size");
    app->add_option("--L-mem", L_mem, "Memory layers (default L / 2)");
    app->add_option("--l-ref", l_ref, "Reference length");
    app->add_option("--l-mem", l_mem, "Sparse tokens per memory head");
    app->add_option("--l-chunk", l_chunk, "Decode chunk length");
    app->add_option("--n-refs", n_refs, "Memories per chunk");
  }

  ModelConfig config() const {
    ModelConfig c = ModelConfig::toy();
    c.n_layers = L;
    c.n_heads = H;
    c.n_kv_heads = H_kv;
    c.head_dim = d_h;
    c.hidden_dim = d > 0 ? d : H * d_h;
    c.mlp_width = W;
    c.n_vocab = vocab;
    c.n_mem_layers = L_mem > 0 ? L_mem : std::max(1, L / 2);
    c.ref_len = l_ref;
    c.mem_tokens = l_mem;
    c.chunk_len = l_chunk;
    c.refs_per_chunk = n_refs;
    c.validate();
    return c;
  }
};

struct CostFlags {
  CostParams p;
  double d = 0;
  double from = 0.01, to = 1e6, step = 1.2589254117941673;  // 10 rows per decade
  bool linear = false;
  std::optional<double> n;

  void add(CLI::App* app) {
    app->add_option("--L", p.n_layers, "Transformer blocks");
    app->add_option("--H", p.n_heads, "Query heads");
    app->add_option("--H-kv", p.n_kv_heads, "Key-value heads");
    app->add_option("--d-h", p.head_dim, "Head dimension");
    app->add_option("--d", d, "Hidden dimension (default H * d_h)");
    app->add_option("--W", p.mlp_width, "MLP width");
    app->add_option("--n-vocab", p.n_vocab, "LM head size");
    app->add_option("--L-mem", p.n_mem_layers, "Memory layers");
    app->add_option("--l-ref", p.ref_len, "Reference length");
    app->add_option("--l-mem", p.mem_tokens, "Sparse tokens per memory head");
    app->add_option("--l-chunk", p.chunk_len, "Decode chunk length");
    app->add_option("--l-train", p.train_len, "Training sequence length");
    app->add_option("--from", from, "First usage count");
    app->add_option("--to", to, "Last usage count");
    app->add_option("--step", step, "Increment (linear) or factor (default log)");
    app->add_flag("--linear", linear, "Linear usage-count grid");
    app->add_option("--n", n, "Report the optimal format at this usage count");
  }

  CostParams params() const {
    CostParams q = p;
    q.hidden_dim = d > 0 ? d : p.n_heads * p.head_dim;
    return q;
  }
};

std::vector<ExplicitMemory> encode_all(const Model& model,
                                       const std::vector<std::vector<Token>>& pieces,
                                       WeightMode mode, int threads) {
  std::vector<ExplicitMemory> out(pieces.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  const auto work = [&] {
    for (std::size_t i = next++; i < pieces.size(); i = next++) {
      try {
        out[i] = write_memory(model, pieces[i], mode, i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

int cmd_init_model(const ModelFlags& flags, const std::string& out_path, std::uint64_t seed,
                   std::ostream& out) {
  const Model model = Model::init(flags.config(), seed);
  model.save(out_path);
  print_stats(out, {{"model", out_path},
                    {"fingerprint", hex64(model.fingerprint())},
                    {"non_embedding_params", std::to_string(non_embedding_param_count(model.config()))}});
  return kExitOk;
}

struct BuildBankArgs {
  std::string refs, model, bank, index, codebook, levels, weight_mode = "approximate";
  bool quantize = false;
  std::uint64_t seed = 0;
  int embedding_dim = 256;
  int threads = 0;
  int kmeans_iterations = 20;
};

int cmd_build_bank(const BuildBankArgs& a, std::ostream& out) {
  const Model model = Model::load(a.model);
  const auto& cfg = model.config();
  const auto pieces = load_references(a.refs, cfg.ref_len);
  require(!pieces.empty(), ErrorCode::kInput, "no references in " + a.refs);
  const int threads = a.threads > 0 ? a.threads
                                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const auto memories = encode_all(model, pieces, parse_weight_mode(a.weight_mode), threads);

  const HashedNgramEmbedder embedder(a.embedding_dim);
  RetrievalIndex index(a.embedding_dim);
  for (std::size_t i = 0; i < pieces.size(); ++i) index.add(i, embedder.embed(pieces[i]), pieces[i]);

  std::optional<MemoryCodebooks> codebooks;
  std::optional<QuantizerGeometry> geometry;
  if (a.quantize) {
    require(!a.codebook.empty(), ErrorCode::kUsage, "--quantize needs --codebook");
    QuantizerGeometry g = a.levels.empty() ? QuantizerGeometry::desk(cfg.head_dim)
                                           : QuantizerGeometry{cfg.head_dim, parse_levels(a.levels)};
    g.validate();
    codebooks = train_memory_codebooks(memories, g, {a.kmeans_iterations, a.seed});
    save_codebooks(a.codebook, *codebooks);
    geometry = g;
  }
  bank_save(memories, a.bank, cfg, model.fingerprint(), codebooks ? &*codebooks : nullptr);
  index.save(a.index);

  const auto bank_bytes = read_file(a.bank);
  const double n = static_cast<double>(memories.size());
  const StorageReport rep = storage_report(cfg, n, 2, geometry);
  std::vector<std::pair<std::string, std::string>> stats = {
      {"references", std::to_string(pieces.size())},
      {"bank_count", std::to_string(memories.size())},
      {"index_count", std::to_string(index.size())},
      {"quantized", a.quantize ? "1" : "0"},
      {"bank_bytes", std::to_string(bank_bytes.size())},
      {"bank_checksum", hex64(fnv1a(bank_bytes))},
      {"full_bytes", fmt(rep.full_bytes, 12)},
      {"sparse_bytes", fmt(rep.sparse_bytes, 12)},
      {"quantized_bytes", fmt(rep.quantized_bytes, 12)},
      {"sparsity_factor", fmt(rep.sparsity_factor, 10)},
      {"quant_ratio", fmt(rep.quant_ratio, 6)},
      {"reference_quant_ratio", fmt(QuantizerGeometry::reference().compression_rate(2), 4)},
      {"total_compression", fmt(rep.total_compression, 6)},
  };
  if (codebooks) {
    // Measured reconstruction error on the stored vectors.
    std::vector<float> keys;
    for (const auto& m : memories) keys.insert(keys.end(), m.keys.begin(), m.keys.end());
    stats.emplace_back("key_mse", fmt(reconstruction_mse(codebooks->keys, keys)));
  }
  print_stats(out, stats);
  return kExitOk;
}

std::vector<Token> prompt_tokens(const std::string& text, const std::string& file) {
  require(text.empty() != file.empty(), ErrorCode::kUsage, "give exactly one of --prompt, --prompt-file");
  const std::string body = file.empty() ? text : read_text(file);
  return ByteTokenizer{}.encode(body);
}

int cmd_infer(const EngineConfig& cfg, const std::vector<Token>& prompt, int n_tokens,
              std::ostream& out) {
  const auto res = open_engine(cfg);
  Session session(res, SessionOptions::from(cfg));
  const auto tokens = session.generate(prompt, n_tokens);
  out << ByteTokenizer{}.decode(tokens) << '\n';
  const auto& s = session.stats();
  print_stats(out, {{"retrievals", std::to_string(s.retrievals)},
                    {"expected_retrievals",
                     std::to_string(expected_retrievals(prompt.size(), tokens.size(),
                                                        session.chunk_len()))},
                    {"memories_attached", std::to_string(s.memories_attached)},
                    {"cache_hits", std::to_string(s.cache_hits)},
                    {"cache_misses", std::to_string(s.cache_misses)},
                    {"bank_reads", std::to_string(s.bank_reads)},
                    {"cold_encodes", std::to_string(s.cold_encodes)},
                    {"filtered", std::to_string(s.filtered)},
                    {"remote_failures", std::to_string(s.remote_failures)},
                    {"prompt_tokens", std::to_string(s.prompt_tokens)},
                    {"generated_tokens", std::to_string(s.generated_tokens)},
                    {"mode", to_string(cfg.mode)},
                    {"memory", cfg.use_memory ? "on" : "off"},
                    {"output_tokens", join_tokens(tokens)}});
  return kExitOk;
}

int cmd_cost(const CostFlags& f, std::ostream& out) {
  const CostParams p = f.params();
  const CostReport r = cost_report(p);
  write_curves_csv(out, emit_curves(p, f.from, f.to, f.step, !f.linear));
  std::vector<std::pair<std::string, std::string>> stats = {
      {"write_implicit_tflops", fmt(r.write_implicit, 8)},
      {"write_explicit_tflops", fmt(r.write_explicit, 8)},
      {"write_external_tflops", fmt(r.write_external, 8)},
      {"read_implicit_tflops", fmt(r.read_implicit, 8)},
      {"read_explicit_tflops", fmt(r.read_explicit, 8)},
      {"read_external_tflops", fmt(r.read_external, 8)},
      {"n_lo", r.interval ? fmt(r.interval->lo, 8) : "none"},
      {"n_hi", r.interval ? fmt(r.interval->hi, 8) : "none"},
  };
  if (f.n) {
    stats.emplace_back("n", fmt(*f.n, 10));
    stats.emplace_back("format", to_string(optimal_format(p, *f.n).format));
  }
  print_stats(out, stats);
  return kExitOk;
}

struct ServeArgs {
  std::string model, bank, index, codebook, endpoint = "127.0.0.1:7070", port_file;
  double duration = 0;
};

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  const Model model = Model::load(a.model);
  auto codebooks = load_codebooks(a.codebook);
  auto bank = std::make_shared<const MemoryBank>(
      MemoryBank::load(a.bank, model.config(), model.fingerprint(), std::move(codebooks)));
  auto index = std::make_shared<const RetrievalIndex>(RetrievalIndex::load(a.index));
  BankServer server(bank, index);
  server.start(a.endpoint);
  out << "listening port=" << server.port() << std::endl;
  if (!a.port_file.empty()) {
    const std::string port = std::to_string(server.port()) + "\n";
    write_file(a.port_file, {reinterpret_cast<const std::uint8_t*>(port.data()), port.size()});
  }
  g_stop = false;
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  const auto start = std::chrono::steady_clock::now();
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    if (a.duration > 0 && std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                                  .count() >= a.duration) {
      break;
    }
  }
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  server.stop();
  print_stats(out, {{"requests", std::to_string(server.requests())}});
  return kExitOk;
}

struct BenchArgs {
  int prompt_len = 128;
  int n_tokens = 128;
  int repeats = 4;
  bool retrievals_only = false;
};

std::vector<Token> bench_prompt(int n) {
  static constexpr std::string_view kText =
      "The quick brown fox jumps over the lazy dog while the river keeps flowing to the sea. ";
  const auto base = ByteTokenizer{}.encode(kText);
  std::vector<Token> out;
  while (out.size() < static_cast<std::size_t>(n)) out.push_back(base[out.size() % base.size()]);
  return out;
}

int cmd_bench(const EngineConfig& cfg, const BenchArgs& a, std::ostream& out) {
  require(a.prompt_len > 0 && a.n_tokens > 0, ErrorCode::kUsage, "lengths must be positive");
  if (a.retrievals_only) {
    int chunk = cfg.chunk_len;
    if (chunk == 0) chunk = Model::load(cfg.model_path).config().chunk_len;
    print_stats(out, {{"prompt_tokens", std::to_string(a.prompt_len)},
                      {"generated_tokens", std::to_string(a.n_tokens)},
                      {"chunk_len", std::to_string(chunk)},
                      {"retrievals", std::to_string(expected_retrievals(
                                         static_cast<std::uint64_t>(a.prompt_len),
                                         static_cast<std::uint64_t>(a.n_tokens), chunk))}});
    return kExitOk;
  }
  require(a.repeats >= 2, ErrorCode::kUsage, "--repeats must be at least 2");
  const auto res = open_engine(cfg);
  const auto prompt = bench_prompt(a.prompt_len);
  const auto time_runs = [&](bool memory) {
    SessionOptions opt = SessionOptions::from(cfg);
    opt.use_memory = memory && cfg.use_memory;
    std::vector<double> runs;
    for (int r = 0; r < a.repeats; ++r) {
      Session s(res, opt);
      const auto t0 = std::chrono::steady_clock::now();
      s.generate(prompt, a.n_tokens);
      runs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return runs;
  };
  const auto plain = time_runs(false);
  const auto memory = time_runs(true);
  const auto list = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i], 8);
    return s;
  };
  const double tps_plain = a.n_tokens / mean_after_warmup(plain);
  const double tps_memory = a.n_tokens / mean_after_warmup(memory);
  print_stats(out, {{"runs_plain_s", list(plain)},
                    {"runs_memory_s", list(memory)},
                    {"tokens_per_sec_plain", fmt(tps_plain)},
                    {"tokens_per_sec_memory", fmt(tps_memory)},
                    {"ratio", fmt(tps_memory / tps_plain)}});
  return kExitOk;
}

}  // namespace

double mean_after_warmup(std::span<const double> runs) {
  require(runs.size() >= 2, ErrorCode::kInput, "need at least two runs");
  return std::accumulate(runs.begin() + 1, runs.end(), 0.0) / double(runs.size() - 1);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"em3: explicit-memory transformer toolkit"};
  app.require_subcommand(1);

  ModelFlags init_flags;
  std::string init_out;
  std::uint64_t init_seed = 0;
  auto* init = app.add_subcommand("init-model", "Write a randomly initialized model");
  init_flags.add(init);
  init->add_option("--out", init_out, "Checkpoint path")->required();
  init->add_option("--seed", init_seed, "Initialization seed");

  BuildBankArgs bb;
  auto* build = app.add_subcommand("build-bank", "Encode references into a memory bank");
  build->add_option("--refs", bb.refs, "Newline-delimited UTF-8 references")->required();
  build->add_option("--model", bb.model, "Model checkpoint")->required();
  build->add_option("--bank", bb.bank, "Output bank file")->required();
  build->add_option("--index", bb.index, "Output index file")->required();
  build->add_option("--codebook", bb.codebook, "Output codebook file");
  build->add_flag("--quantize", bb.quantize, "Quantize stored memories");
  build->add_option("--levels", bb.levels, "Quantizer levels, e.g. 2x4,2x4");
  build->add_option("--kmeans-iterations", bb.kmeans_iterations, "Lloyd iterations per level");
  build->add_option("--weight-mode", bb.weight_mode, "exact | approximate");
  build->add_option("--seed", bb.seed, "Quantizer training seed");
  build->add_option("--embedding-dim", bb.embedding_dim, "Index embedding dimension");
  build->add_option("--threads", bb.threads, "Encoding threads (0 = all cores)");

  EngineFlags infer_flags;
  std::string prompt, prompt_file;
  int n_tokens = 64;
  auto* infer = app.add_subcommand("infer", "Generate with memory recall");
  infer_flags.add(infer);
  infer->add_option("--prompt", prompt, "Prompt text");
  infer->add_option("--prompt-file", prompt_file, "Prompt file");
  infer->add_option("--n-tokens", n_tokens, "Tokens to generate");

  CostFlags cost_flags;
  auto* cost = app.add_subcommand("cost", "Write/read cost curves and advantage interval");
  cost_flags.add(cost);

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Serve the index and a quantized bank");
  serve->add_option("--model", sv.model, "Model checkpoint the bank was built with")->required();
  serve->add_option("--bank", sv.bank, "Quantized bank file")->required();
  serve->add_option("--index", sv.index, "Index file")->required();
  serve->add_option("--codebook", sv.codebook, "Codebook file")->required();
  serve->add_option("--endpoint", sv.endpoint, "host:port to listen on (port 0 = any)");
  serve->add_option("--port-file", sv.port_file, "Write the bound port here");
  serve->add_option("--duration", sv.duration, "Seconds to serve (0 = until signalled)");

  EngineFlags bench_flags;
  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Throughput with and without memory");
  bench_flags.add(bench);
  bench->add_option("--prompt-len", ba.prompt_len, "Prompt tokens");
  bench->add_option("--n-tokens", ba.n_tokens, "Generated tokens");
  bench->add_option("--repeats", ba.repeats, "Runs per mode; the first is discarded");
  bench->add_flag("--retrievals-only", ba.retrievals_only, "Print the retrieval count only");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*init) return cmd_init_model(init_flags, init_out, init_seed, out);
    if (*build) return cmd_build_bank(bb, out);
    if (*infer) return cmd_infer(infer_flags.resolve(infer), prompt_tokens(prompt, prompt_file),
                                 n_tokens, out);
    if (*cost) return cmd_cost(cost_flags, out);
    if (*serve) return cmd_serve(sv, out);
    if (*bench) return cmd_bench(bench_flags.resolve(bench), ba, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace em3::cli
