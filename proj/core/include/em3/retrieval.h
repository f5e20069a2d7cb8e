#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "em3/config.h"

namespace em3 {

// Token sequence -> unit vector. Implementations must be deterministic.
// Queries and references of one index must share one embedder.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  // Throws ErrorCode::kInput for an empty sequence.
  virtual std::vector<float> embed(std::span<const Token> tokens) const = 0;
};

// Bag of hashed n-grams (n = 1..max_n) over token ids, L2-normalized.
class HashedNgramEmbedder final : public Embedder {
 public:
  explicit HashedNgramEmbedder(int dim = 256, int max_n = 3);
  int dim() const override { return dim_; }
  std::vector<float> embed(std::span<const Token> tokens) const override;

 private:
  int dim_;
  int max_n_;
};

// Client for an out-of-process embedding model. One request per call:
//   request  = u32 byte length, then that many bytes of u32 LE token ids
//   response = dim x f32 LE
// endpoint is "tcp://host:port" or "host:port".
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(std::string endpoint, int dim,
                 std::chrono::milliseconds timeout = std::chrono::seconds(5));
  int dim() const override { return dim_; }
  std::vector<float> embed(std::span<const Token> tokens) const override;

 private:
  std::string host_;
  int port_;
  int dim_;
  std::chrono::milliseconds timeout_;
};

std::vector<float> normalized(std::span<const float> v);

struct SearchHit {
  std::uint64_t id = 0;
  float score = 0.0f;

  bool operator==(const SearchHit&) const = default;
};

struct SearchResult {
  std::vector<SearchHit> hits;
  bool truncated = false;  // k exceeded the index size
};

// Exact (full scan) cosine-similarity index over reference embeddings,
// carrying reference tokens for the leakage filter.
//
// File layout (little-endian): "EM3I", u32 dim, u64 count, u64 ids[count],
// f32 embeddings[count][dim], then per reference u32 length + u32 tokens.
class RetrievalIndex {
 public:
  explicit RetrievalIndex(int dim);

  // Stores the embedding normalized. Throws kInput on a duplicate id.
  void add(std::uint64_t id, std::span<const float> embedding, std::vector<Token> tokens);

  // Top-k by cosine, descending, ties to the lower id. Throws kState on an
  // empty index and kInput for k < 1.
  SearchResult search(std::span<const float> query, int k) const;

  const std::vector<Token>& tokens(std::uint64_t id) const;
  std::span<const float> embedding(std::uint64_t id) const;
  bool contains(std::uint64_t id) const { return slot_.count(id) > 0; }

  int dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::uint64_t>& ids() const { return ids_; }

  std::vector<std::uint8_t> serialize() const;
  static RetrievalIndex deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static RetrievalIndex load(const std::filesystem::path& path);

 private:
  int dim_;
  std::vector<std::uint64_t> ids_;
  std::vector<float> embeddings_;
  std::vector<std::vector<Token>> tokens_;
  std::map<std::uint64_t, std::size_t> slot_;
};

// Longest common subsequence of t and r whose matched positions in t span
// at most 2|r| (i_N - i_1 <= 2|r|), divided by |r|. Throws kInput for empty r.
double overlap(std::span<const Token> t, std::span<const Token> r);

// Drops candidates whose reference overlaps the probe by >= threshold,
// preserving order. Throws kNotFound for ids missing from the index.
std::vector<SearchHit> filter_leakage(std::span<const SearchHit> candidates,
                                      std::span<const Token> probe, double threshold,
                                      const RetrievalIndex& index);

}  // namespace em3
