#include <algorithm>
#include <numeric>

#include "em3/binary_io.h"
#include "em3/error.h"
#include "em3/retrieval.h"

namespace em3 {
namespace {

constexpr std::string_view kIndexMagic = "EM3I";

}  // namespace

RetrievalIndex::RetrievalIndex(int dim) : dim_(dim) {
  require(dim >= 1, ErrorCode::kConfig, "index dim must be positive");
}

void RetrievalIndex::add(std::uint64_t id, std::span<const float> embedding,
                         std::vector<Token> tokens) {
  require(embedding.size() == static_cast<std::size_t>(dim_), ErrorCode::kShape,
          "embedding has " + std::to_string(embedding.size()) + " dims, index expects " +
              std::to_string(dim_));
  require(!slot_.count(id), ErrorCode::kInput, "duplicate reference id " + std::to_string(id));
  const auto unit = normalized(embedding);
  slot_.emplace(id, ids_.size());
  ids_.push_back(id);
  embeddings_.insert(embeddings_.end(), unit.begin(), unit.end());
  tokens_.push_back(std::move(tokens));
}

SearchResult RetrievalIndex::search(std::span<const float> query, int k) const {
  require(!ids_.empty(), ErrorCode::kState, "search on an empty index");
  require(k >= 1, ErrorCode::kInput, "k must be at least 1");
  require(query.size() == static_cast<std::size_t>(dim_), ErrorCode::kShape,
          "query dimension differs from index");
  const auto q = normalized(query);
  const std::size_t d = static_cast<std::size_t>(dim_);
  std::vector<float> scores(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    float s = 0.0f;
    const float* e = embeddings_.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) s += q[j] * e[j];
    scores[i] = s;
  }
  std::vector<std::size_t> order(ids_.size());
  std::iota(order.begin(), order.end(), 0);
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids_[a] < ids_[b];
  };
  SearchResult out;
  std::size_t take = static_cast<std::size_t>(k);
  if (take > order.size()) {
    take = order.size();
    out.truncated = true;
  }
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    better);
  out.hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.hits.push_back({ids_[order[i]], scores[order[i]]});
  return out;
}

const std::vector<Token>& RetrievalIndex::tokens(std::uint64_t id) const {
  auto it = slot_.find(id);
  if (it == slot_.end()) fail(ErrorCode::kNotFound, "reference " + std::to_string(id) + " not in index");
  return tokens_[it->second];
}

std::span<const float> RetrievalIndex::embedding(std::uint64_t id) const {
  auto it = slot_.find(id);
  if (it == slot_.end()) fail(ErrorCode::kNotFound, "reference " + std::to_string(id) + " not in index");
  return {embeddings_.data() + it->second * static_cast<std::size_t>(dim_),
          static_cast<std::size_t>(dim_)};
}

std::vector<std::uint8_t> RetrievalIndex::serialize() const {
  ByteWriter w;
  w.put_magic(kIndexMagic);
  w.put_u32(static_cast<std::uint32_t>(dim_));
  w.put_u64(ids_.size());
  for (auto id : ids_) w.put_u64(id);
  w.put_f32s(embeddings_);
  for (const auto& t : tokens_) {
    w.put_u32(static_cast<std::uint32_t>(t.size()));
    for (Token x : t) w.put_u32(static_cast<std::uint32_t>(x));
  }
  return std::move(w).take();
}

RetrievalIndex RetrievalIndex::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kIndexMagic, "index file");
  const std::uint32_t dim = r.get_u32();
  require(dim >= 1 && dim <= (1u << 20), ErrorCode::kFormat, "index dim out of range");
  const std::uint64_t count = r.get_u64();
  require(count <= r.remaining() / 8, ErrorCode::kFormat, "index count larger than file");
  RetrievalIndex index(static_cast<int>(dim));
  std::vector<std::uint64_t> ids(count);
  for (auto& id : ids) id = r.get_u64();
  require(count * dim <= r.remaining() / 4, ErrorCode::kFormat, "index embeddings truncated");
  std::vector<float> emb(count * dim);
  r.get_f32s(emb);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t n = r.get_u32();
    require(n <= r.remaining() / 4, ErrorCode::kFormat, "reference tokens truncated");
    std::vector<Token> toks(n);
    for (auto& t : toks) t = static_cast<Token>(r.get_u32());
    require(!index.slot_.count(ids[i]), ErrorCode::kFormat, "duplicate id in index file");
    index.slot_.emplace(ids[i], index.ids_.size());
    index.ids_.push_back(ids[i]);
    index.tokens_.push_back(std::move(toks));
  }
  require(r.remaining() == 0, ErrorCode::kFormat, "trailing bytes in index file");
  index.embeddings_ = std::move(emb);
  return index;
}

void RetrievalIndex::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

RetrievalIndex RetrievalIndex::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

}  // namespace em3
