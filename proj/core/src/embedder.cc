#include <cmath>

#include "em3/binary_io.h"
#include "em3/error.h"
#include "em3/retrieval.h"
#include "net.h"

namespace em3 {

std::vector<float> normalized(std::span<const float> v) {
  double sq = 0.0;
  for (float x : v) sq += double(x) * x;
  require(sq > 0.0 && std::isfinite(sq), ErrorCode::kNumeric, "cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

HashedNgramEmbedder::HashedNgramEmbedder(int dim, int max_n) : dim_(dim), max_n_(max_n) {
  require(dim >= 1, ErrorCode::kConfig, "embedding dim must be positive");
  require(max_n >= 1, ErrorCode::kConfig, "n-gram order must be positive");
}

std::vector<float> HashedNgramEmbedder::embed(std::span<const Token> tokens) const {
  require(!tokens.empty(), ErrorCode::kInput, "cannot embed an empty token sequence");
  std::vector<float> acc(static_cast<std::size_t>(dim_), 0.0f);
  for (int n = 1; n <= max_n_; ++n) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
      Fnv1a h;
      h.update_u64(static_cast<std::uint64_t>(n));
      for (int j = 0; j < n; ++j) h.update_u64(static_cast<std::uint32_t>(tokens[i + j]));
      const std::uint64_t d = h.digest();
      // Signed feature hashing: low bits pick the bucket, the top bit the sign.
      acc[d % static_cast<std::uint64_t>(dim_)] += (d >> 63) ? -1.0f : 1.0f;
    }
  }
  double sq = 0.0;
  for (float x : acc) sq += double(x) * x;
  if (sq == 0.0) acc[0] = 1.0f;  // every feature cancelled
  return normalized(acc);
}

RemoteEmbedder::RemoteEmbedder(std::string endpoint, int dim, std::chrono::milliseconds timeout)
    : dim_(dim), timeout_(timeout) {
  require(dim >= 1, ErrorCode::kConfig, "embedding dim must be positive");
  auto ep = net::parse_endpoint(endpoint);
  host_ = std::move(ep.host);
  port_ = ep.port;
}

std::vector<float> RemoteEmbedder::embed(std::span<const Token> tokens) const {
  require(!tokens.empty(), ErrorCode::kInput, "cannot embed an empty token sequence");
  ByteWriter w;
  w.put_u32(static_cast<std::uint32_t>(tokens.size() * 4));
  for (Token t : tokens) w.put_u32(static_cast<std::uint32_t>(t));
  auto sock = net::Socket::connect({host_, port_}, timeout_);
  sock.send_all(w.bytes());
  std::vector<std::uint8_t> reply(static_cast<std::size_t>(dim_) * 4);
  require(sock.recv_exact(reply), ErrorCode::kTransport, "embedding service closed the connection");
  ByteReader r(reply);
  std::vector<float> out(static_cast<std::size_t>(dim_));
  r.get_f32s(out);
  return normalized(out);
}

}  // namespace em3
