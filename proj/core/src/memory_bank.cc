#include "em3/memory_bank.h"

#include <algorithm>
#include <random>
#include <string>

#include "em3/binary_io.h"
#include "em3/error.h"

namespace em3 {
namespace {

constexpr std::string_view kBankMagic = "EM3B";
constexpr std::uint16_t kBankVersion = 1;
constexpr std::uint16_t kFlagQuantized = 1;
constexpr std::size_t kBankHeaderBytes = 4 + 2 + 2 + 8 + 8;
constexpr std::size_t kTableEntryBytes = 8 + 8 + 4;

std::size_t sz(int a) { return static_cast<std::size_t>(a); }

std::string id_str(std::uint64_t id) { return std::to_string(id); }

}  // namespace

std::vector<std::uint8_t> encode_memory_record(const ExplicitMemory& m,
                                               const MemoryCodebooks* codebooks) {
  const std::size_t n = m.n_vectors();
  require(m.keys.size() == n * sz(m.head_dim) && m.values.size() == m.keys.size() &&
              m.positions.size() == n,
          ErrorCode::kShape, "memory tensor sizes inconsistent with header");
  ByteWriter w;
  for (int v : {m.n_layers, m.n_kv_heads, m.n_tokens, m.head_dim}) {
    require(v >= 0 && v <= 65535, ErrorCode::kShape, "memory dimension exceeds 16 bits");
    w.put_u16(static_cast<std::uint16_t>(v));
  }
  for (std::int32_t p : m.positions) {
    require(p >= 0 && p <= 65535, ErrorCode::kShape, "memory position exceeds 16 bits");
    w.put_u16(static_cast<std::uint16_t>(p));
  }
  if (codebooks == nullptr) {
    w.put_f32s(m.keys);
    w.put_f32s(m.values);
  } else {
    require(codebooks->keys.geometry().dim == m.head_dim &&
                codebooks->values.geometry().dim == m.head_dim,
            ErrorCode::kCompatibility, "codebook dimension differs from memory head_dim");
    const std::size_t dh = sz(m.head_dim);
    for (std::size_t i = 0; i < n; ++i) {
      w.put_bytes(codebooks->keys.encode(std::span(m.keys).subspan(i * dh, dh)));
    }
    for (std::size_t i = 0; i < n; ++i) {
      w.put_bytes(codebooks->values.encode(std::span(m.values).subspan(i * dh, dh)));
    }
  }
  return std::move(w).take();
}

ExplicitMemory decode_memory_record(std::span<const std::uint8_t> record, std::uint64_t id,
                                    const MemoryCodebooks* codebooks) {
  ByteReader r(record);
  ExplicitMemory m;
  m.id = id;
  m.n_layers = r.get_u16();
  m.n_kv_heads = r.get_u16();
  m.n_tokens = r.get_u16();
  m.head_dim = r.get_u16();
  const std::size_t n = m.n_vectors();
  const std::size_t dh = sz(m.head_dim);
  m.positions.resize(n);
  for (auto& p : m.positions) p = r.get_u16();
  m.keys.resize(n * dh);
  m.values.resize(n * dh);
  if (codebooks == nullptr) {
    r.get_f32s(m.keys);
    r.get_f32s(m.values);
  } else {
    require(codebooks->keys.geometry().dim == m.head_dim &&
                codebooks->values.geometry().dim == m.head_dim,
            ErrorCode::kCompatibility, "codebook dimension differs from memory head_dim");
    const std::size_t kb = sz(codebooks->keys.geometry().code_bytes());
    const std::size_t vb = sz(codebooks->values.geometry().code_bytes());
    for (std::size_t i = 0; i < n; ++i) {
      codebooks->keys.decode_into(r.get_bytes(kb), std::span(m.keys).subspan(i * dh, dh));
    }
    for (std::size_t i = 0; i < n; ++i) {
      codebooks->values.decode_into(r.get_bytes(vb), std::span(m.values).subspan(i * dh, dh));
    }
    m.quantized = true;
  }
  require(r.remaining() == 0, ErrorCode::kFormat, "trailing bytes in memory record");
  return m;
}

MemoryCodebooks train_memory_codebooks(std::span<const ExplicitMemory> memories,
                                       const QuantizerGeometry& geometry,
                                       const QuantizerTrainOptions& options,
                                       std::size_t max_samples) {
  const std::size_t dh = sz(geometry.dim);
  std::size_t total = 0;
  for (const auto& m : memories) {
    require(sz(m.head_dim) == dh, ErrorCode::kCompatibility,
            "memory head_dim differs from quantizer dim");
    total += m.n_vectors();
  }
  // Uniform sample of vector indices, sorted for a stable gather order.
  std::vector<std::size_t> picks(total);
  for (std::size_t i = 0; i < total; ++i) picks[i] = i;
  if (total > max_samples) {
    std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(picks.begin(), picks.end(), rng);
    picks.resize(max_samples);
    std::sort(picks.begin(), picks.end());
  }

  std::vector<float> keys;
  std::vector<float> values;
  keys.reserve(picks.size() * dh);
  values.reserve(picks.size() * dh);
  std::size_t base = 0;
  std::size_t next = 0;
  for (const auto& m : memories) {
    const std::size_t count = m.n_vectors();
    while (next < picks.size() && picks[next] < base + count) {
      const std::size_t local = picks[next] - base;
      keys.insert(keys.end(), m.keys.begin() + static_cast<std::ptrdiff_t>(local * dh),
                  m.keys.begin() + static_cast<std::ptrdiff_t>((local + 1) * dh));
      values.insert(values.end(), m.values.begin() + static_cast<std::ptrdiff_t>(local * dh),
                    m.values.begin() + static_cast<std::ptrdiff_t>((local + 1) * dh));
      ++next;
    }
    base += count;
  }

  MemoryCodebooks out;
  out.keys = quantizer_train(keys, geometry, options);
  QuantizerTrainOptions value_options = options;
  value_options.seed = options.seed + 1;
  out.values = quantizer_train(values, geometry, value_options);
  return out;
}

MemoryBank::MemoryBank(const ModelConfig& config, std::uint64_t model_hash,
                       std::optional<MemoryCodebooks> codebooks)
    : config_(config), model_hash_(model_hash), codebooks_(std::move(codebooks)) {
  if (codebooks_) {
    require(codebooks_->keys.trained() && codebooks_->values.trained(), ErrorCode::kState,
            "bank codebooks must be trained");
    require(codebooks_->keys.geometry().dim == config.head_dim &&
                codebooks_->values.geometry().dim == config.head_dim,
            ErrorCode::kCompatibility, "codebook dimension differs from model head_dim");
  }
}

MemoryBank::MemoryBank(MemoryBank&& other) noexcept
    : config_(std::move(other.config_)),
      model_hash_(other.model_hash_),
      codebooks_(std::move(other.codebooks_)),
      records_(std::move(other.records_)) {}

void MemoryBank::put(const ExplicitMemory& memory) {
  memory.check_shape(config_);
  auto bytes = encode_memory_record(memory, codebooks_ ? &*codebooks_ : nullptr);
  std::unique_lock lock(mu_);
  records_[memory.id] = std::move(bytes);
}

ExplicitMemory MemoryBank::get(std::uint64_t id) const {
  std::shared_lock lock(mu_);
  auto it = records_.find(id);
  if (it == records_.end()) fail(ErrorCode::kNotFound, "memory " + id_str(id) + " not in bank");
  return decode_memory_record(it->second, id, codebooks_ ? &*codebooks_ : nullptr);
}

std::vector<std::uint8_t> MemoryBank::record(std::uint64_t id) const {
  std::shared_lock lock(mu_);
  auto it = records_.find(id);
  if (it == records_.end()) fail(ErrorCode::kNotFound, "memory " + id_str(id) + " not in bank");
  return it->second;
}

bool MemoryBank::contains(std::uint64_t id) const {
  std::shared_lock lock(mu_);
  return records_.count(id) > 0;
}

std::size_t MemoryBank::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

std::vector<std::uint64_t> MemoryBank::ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::uint64_t> out;
  out.reserve(records_.size());
  for (const auto& [id, _] : records_) out.push_back(id);
  return out;
}

std::vector<std::uint8_t> MemoryBank::serialize() const {
  std::shared_lock lock(mu_);
  ByteWriter w;
  w.put_magic(kBankMagic);
  w.put_u16(kBankVersion);
  w.put_u16(codebooks_ ? kFlagQuantized : 0);
  w.put_u64(model_hash_);
  w.put_u64(records_.size());
  std::uint64_t offset = kBankHeaderBytes + records_.size() * kTableEntryBytes;
  for (const auto& [id, bytes] : records_) {
    w.put_u64(id);
    w.put_u64(offset);
    w.put_u32(static_cast<std::uint32_t>(bytes.size()));
    offset += bytes.size();
  }
  for (const auto& [id, bytes] : records_) w.put_bytes(bytes);
  return std::move(w).take();
}

void MemoryBank::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

MemoryBank MemoryBank::load(const std::filesystem::path& path, const ModelConfig& config,
                            std::uint64_t expected_model_hash,
                            std::optional<MemoryCodebooks> codebooks) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  r.expect_magic(kBankMagic, "bank file '" + path.string() + "'");
  const std::uint16_t version = r.get_u16();
  require(version == kBankVersion, ErrorCode::kCompatibility,
          "unsupported bank version " + std::to_string(version));
  const std::uint16_t flags = r.get_u16();
  const std::uint64_t hash = r.get_u64();
  const std::uint64_t count = r.get_u64();
  require(hash == expected_model_hash, ErrorCode::kCompatibility,
          "bank '" + path.string() + "' was written by a different model");
  const bool quantized = (flags & kFlagQuantized) != 0;
  if (quantized) {
    require(codebooks.has_value(), ErrorCode::kCompatibility,
            "bank is quantized but no codebook was supplied");
  } else {
    codebooks.reset();
  }
  require(count <= r.remaining() / kTableEntryBytes, ErrorCode::kFormat,
          "record table larger than file");

  MemoryBank bank(config, hash, std::move(codebooks));
  std::uint64_t prev_id = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t id = r.get_u64();
    const std::uint64_t offset = r.get_u64();
    const std::uint32_t length = r.get_u32();
    require(i == 0 || id > prev_id, ErrorCode::kFormat, "record table not sorted by id");
    require(offset <= bytes.size() && length <= bytes.size() - offset, ErrorCode::kFormat,
            "record " + id_str(id) + " lies outside the file");
    bank.records_[id].assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                             bytes.begin() + static_cast<std::ptrdiff_t>(offset + length));
    prev_id = id;
  }
  return bank;
}

void bank_save(std::span<const ExplicitMemory> memories, const std::filesystem::path& path,
               const ModelConfig& config, std::uint64_t model_hash,
               const MemoryCodebooks* codebooks) {
  MemoryBank bank(config, model_hash,
                  codebooks ? std::optional<MemoryCodebooks>(*codebooks) : std::nullopt);
  for (const auto& m : memories) bank.put(m);
  bank.save(path);
}

}  // namespace em3
