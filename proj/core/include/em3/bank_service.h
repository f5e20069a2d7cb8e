#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "em3/explicit_memory.h"
#include "em3/memory_bank.h"
#include "em3/retrieval.h"
#include "em3/wire.h"

namespace em3 {

namespace net {
class TcpServer;
}

// Hosts the index and a quantized bank. Each query frame is answered with
// the top-k records as stored (codes, never decoded on the server).
class BankServer {
 public:
  // Throws kUsage for a raw bank and kCompatibility if an index id is
  // missing from the bank.
  BankServer(std::shared_ptr<const MemoryBank> bank, std::shared_ptr<const RetrievalIndex> index);
  ~BankServer();
  BankServer(const BankServer&) = delete;
  BankServer& operator=(const BankServer&) = delete;

  // Stateless request handler; always returns one encoded response frame.
  std::vector<std::uint8_t> handle(std::span<const std::uint8_t> request) const;

  // endpoint "host:port"; port 0 picks a free port.
  void start(const std::string& endpoint);
  void stop();
  int port() const;

  std::uint64_t requests() const { return requests_->load(); }

 private:
  std::vector<std::uint8_t> answer(const Frame& request) const;

  std::shared_ptr<const MemoryBank> bank_;
  std::shared_ptr<const RetrievalIndex> index_;
  std::unique_ptr<net::TcpServer> server_;
  std::unique_ptr<std::atomic<std::uint64_t>> requests_;
};

struct RemoteHit {
  std::uint64_t id = 0;
  float score = 0.0f;
  ExplicitMemory memory;
};

// Thin client: holds only the codebooks, decodes received codes locally.
class BankClient {
 public:
  BankClient(std::string endpoint, MemoryCodebooks codebooks,
             std::chrono::milliseconds timeout = std::chrono::seconds(5));

  // k = 0 returns nothing without contacting the server. Throws kTransport
  // on connection failure or timeout, kProtocol on a malformed or
  // version-mismatched reply, and the server's error code for error frames.
  std::vector<RemoteHit> query(std::span<const float> embedding, std::uint32_t k) const;

  const MemoryCodebooks& codebooks() const { return codebooks_; }

 private:
  std::string host_;
  int port_ = 0;
  MemoryCodebooks codebooks_;
  std::chrono::milliseconds timeout_;
};

// Serves an Embedder over the RemoteEmbedder protocol.
class EmbeddingServer {
 public:
  explicit EmbeddingServer(std::shared_ptr<const Embedder> embedder);
  ~EmbeddingServer();
  EmbeddingServer(const EmbeddingServer&) = delete;
  EmbeddingServer& operator=(const EmbeddingServer&) = delete;

  void start(const std::string& endpoint);
  void stop();
  int port() const;

 private:
  std::shared_ptr<const Embedder> embedder_;
  std::unique_ptr<net::TcpServer> server_;
};

}  // namespace em3
