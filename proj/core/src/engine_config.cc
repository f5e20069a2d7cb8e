#include <charconv>

#include "em3/binary_io.h"
#include "em3/engine.h"
#include "em3/error.h"

namespace em3 {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  require(ec == std::errc() && ptr == value.data() + value.size(), ErrorCode::kConfig,
          "bad value '" + std::string(value) + "' for " + std::string(key));
  return out;
}

bool parse_flag(std::string_view key, std::string_view value) {
  if (value == "on" || value == "true" || value == "1" || value == "yes") return true;
  if (value == "off" || value == "false" || value == "0" || value == "no") return false;
  fail(ErrorCode::kConfig, "bad value '" + std::string(value) + "' for " + std::string(key));
}

std::filesystem::path resolve(std::string_view value, const std::filesystem::path& base) {
  std::filesystem::path p{std::string(value)};
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

}  // namespace

const char* to_string(StartMode mode) noexcept {
  return mode == StartMode::kWarm ? "warm" : "cold";
}

StartMode parse_start_mode(std::string_view text) {
  if (text == "warm") return StartMode::kWarm;
  if (text == "cold") return StartMode::kCold;
  fail(ErrorCode::kConfig, "mode must be warm or cold, got '" + std::string(text) + "'");
}

void EngineConfig::set(std::string_view key, std::string_view value,
                       const std::filesystem::path& base_dir) {
  if (key == "model") {
    model_path = resolve(value, base_dir);
  } else if (key == "bank") {
    bank_path = resolve(value, base_dir);
  } else if (key == "index") {
    index_path = resolve(value, base_dir);
  } else if (key == "codebook") {
    codebook_path = resolve(value, base_dir);
  } else if (key == "cache_capacity") {
    cache_capacity = parse_number<std::size_t>(key, value);
  } else if (key == "chunk_len") {
    chunk_len = parse_number<int>(key, value);
    require(chunk_len >= 0, ErrorCode::kConfig, "chunk_len must be non-negative");
  } else if (key == "n_refs") {
    n_refs = parse_number<int>(key, value);
    require(n_refs >= -1, ErrorCode::kConfig, "n_refs must be >= 0, or -1 for the model value");
  } else if (key == "filter_threshold") {
    filter_threshold = parse_number<double>(key, value);
    require(filter_threshold >= 0.0 && filter_threshold <= 1.0, ErrorCode::kConfig,
            "filter_threshold must lie in [0, 1]");
  } else if (key == "mode") {
    mode = parse_start_mode(value);
  } else if (key == "weight_mode") {
    try {
      weight_mode = parse_weight_mode(value);
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, e.what());
    }
  } else if (key == "memory") {
    use_memory = parse_flag(key, value);
  } else if (key == "bank_endpoint") {
    bank_endpoint = std::string(value);
  } else if (key == "embedder_endpoint") {
    embedder_endpoint = std::string(value);
  } else if (key == "embedding_dim") {
    embedding_dim = parse_number<int>(key, value);
    require(embedding_dim >= 1, ErrorCode::kConfig, "embedding_dim must be positive");
  } else if (key == "timeout_ms") {
    timeout = std::chrono::milliseconds(parse_number<long>(key, value));
  } else if (key == "tolerant") {
    tolerant = parse_flag(key, value);
  } else {
    fail(ErrorCode::kConfig, "unknown engine config key '" + std::string(key) + "'");
  }
}

std::vector<std::pair<std::string, std::string>> EngineConfig::parse_pairs(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string_view::npos, ErrorCode::kConfig,
            "line " + std::to_string(line_no) + ": expected key = value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

EngineConfig EngineConfig::parse(std::string_view text, const std::filesystem::path& base_dir) {
  EngineConfig cfg;
  for (const auto& [key, value] : parse_pairs(text)) {
    try {
      cfg.set(key, value, base_dir);
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, key + ": " + e.what());
    }
  }
  return cfg;
}

EngineConfig EngineConfig::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse({reinterpret_cast<const char*>(bytes.data()), bytes.size()}, path.parent_path());
}

SessionOptions SessionOptions::from(const EngineConfig& c) {
  SessionOptions o;
  o.chunk_len = c.chunk_len;
  o.n_refs = c.n_refs;
  o.filter_threshold = c.filter_threshold;
  o.mode = c.mode;
  o.weight_mode = c.weight_mode;
  o.use_memory = c.use_memory;
  o.tolerant = c.tolerant;
  return o;
}

}  // namespace em3
