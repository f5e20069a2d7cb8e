#include "em3/bank_service.h"
#include "em3/binary_io.h"
#include "net.h"

namespace em3 {

EmbeddingServer::EmbeddingServer(std::shared_ptr<const Embedder> embedder)
    : embedder_(std::move(embedder)) {
  require(embedder_ != nullptr, ErrorCode::kUsage, "embedding server needs an embedder");
}

EmbeddingServer::~EmbeddingServer() { stop(); }

void EmbeddingServer::start(const std::string& endpoint) {
  require(!server_, ErrorCode::kState, "embedding server already started");
  server_ = std::make_unique<net::TcpServer>();
  server_->start(net::parse_endpoint(endpoint), [this](net::Socket& sock) {
    std::uint8_t len_bytes[4];
    if (!sock.recv_exact(len_bytes)) return;
    ByteReader lr(len_bytes);
    const std::uint32_t n = lr.get_u32();
    if (n == 0 || n % 4 != 0 || n > kMaxPayloadBytes) return;
    std::vector<std::uint8_t> body(n);
    if (!sock.recv_exact(body)) return;
    ByteReader r(body);
    std::vector<Token> tokens(n / 4);
    for (auto& t : tokens) t = static_cast<Token>(r.get_u32());
    ByteWriter w;
    w.put_f32s(embedder_->embed(tokens));
    sock.send_all(w.bytes());
  });
}

void EmbeddingServer::stop() {
  if (server_) server_->stop();
  server_.reset();
}

int EmbeddingServer::port() const { return server_ ? server_->port() : 0; }

}  // namespace em3
