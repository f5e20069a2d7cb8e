#include "em3/bank_service.h"

#include <algorithm>
#include <atomic>

#include "em3/binary_io.h"
#include "net.h"

namespace em3 {
namespace {

std::vector<std::uint8_t> error_frame(ErrorCode code, const std::string& message) {
  return encode_frame({kWireVersion, FrameKind::kError,
                       encode_error({wire_error_code(code), message})});
}

void serve_connection(const BankServer& server, net::Socket& sock) {
  std::vector<std::uint8_t> header(kFrameHeaderBytes);
  while (sock.recv_exact(header)) {
    FrameHeader h;
    try {
      h = decode_frame_header(header);
    } catch (const Error& e) {
      // Without a magic the stream cannot be resynchronized.
      sock.send_all(error_frame(e.code(), e.what()));
      return;
    }
    if (h.length > kMaxPayloadBytes) {
      sock.send_all(error_frame(ErrorCode::kProtocol, "frame payload too large"));
      return;
    }
    std::vector<std::uint8_t> frame(kFrameHeaderBytes + h.length);
    std::copy(header.begin(), header.end(), frame.begin());
    if (h.length > 0 && !sock.recv_exact(std::span(frame).subspan(kFrameHeaderBytes))) return;
    sock.send_all(server.handle(frame));
  }
}

}  // namespace

BankServer::BankServer(std::shared_ptr<const MemoryBank> bank,
                       std::shared_ptr<const RetrievalIndex> index)
    : bank_(std::move(bank)),
      index_(std::move(index)),
      requests_(std::make_unique<std::atomic<std::uint64_t>>(0)) {
  require(bank_ && index_, ErrorCode::kUsage, "bank server needs a bank and an index");
  require(bank_->quantized(), ErrorCode::kUsage, "bank server requires a quantized bank");
  for (auto id : index_->ids()) {
    require(bank_->contains(id), ErrorCode::kCompatibility,
            "index reference " + std::to_string(id) + " has no memory in the bank");
  }
}

BankServer::~BankServer() { stop(); }

std::vector<std::uint8_t> BankServer::handle(std::span<const std::uint8_t> request) const {
  requests_->fetch_add(1);
  try {
    return answer(decode_frame(request));
  } catch (const Error& e) {
    return error_frame(e.code(), e.what());
  } catch (const std::exception& e) {
    return error_frame(ErrorCode::kState, e.what());
  }
}

std::vector<std::uint8_t> BankServer::answer(const Frame& request) const {
  require(request.kind == FrameKind::kQuery, ErrorCode::kProtocol, "expected a query frame");
  const QueryMessage q = decode_query(request.payload);
  require(q.embedding.size() == static_cast<std::size_t>(index_->dim()), ErrorCode::kShape,
          "query has " + std::to_string(q.embedding.size()) + " dims, index expects " +
              std::to_string(index_->dim()));
  std::vector<ResultRecord> records;
  if (q.k > 0 && !index_->empty()) {
    const int k = static_cast<int>(std::min<std::uint64_t>(q.k, index_->size()));
    const auto found = index_->search(q.embedding, k);
    records.reserve(found.hits.size());
    for (const auto& hit : found.hits) records.push_back({hit.id, hit.score, bank_->record(hit.id)});
  }
  return encode_frame({kWireVersion, FrameKind::kResult, encode_result(records)});
}

void BankServer::start(const std::string& endpoint) {
  require(!server_, ErrorCode::kState, "bank server already started");
  server_ = std::make_unique<net::TcpServer>();
  server_->start(net::parse_endpoint(endpoint), [this](net::Socket& s) { serve_connection(*this, s); });
}

void BankServer::stop() {
  if (server_) server_->stop();
  server_.reset();
}

int BankServer::port() const { return server_ ? server_->port() : 0; }

BankClient::BankClient(std::string endpoint, MemoryCodebooks codebooks,
                       std::chrono::milliseconds timeout)
    : codebooks_(std::move(codebooks)), timeout_(timeout) {
  auto ep = net::parse_endpoint(endpoint);
  host_ = std::move(ep.host);
  port_ = ep.port;
  require(codebooks_.keys.trained() && codebooks_.values.trained(), ErrorCode::kState,
          "bank client needs trained codebooks");
}

std::vector<RemoteHit> BankClient::query(std::span<const float> embedding, std::uint32_t k) const {
  if (k == 0) return {};
  QueryMessage q;
  q.embedding.assign(embedding.begin(), embedding.end());
  q.k = k;
  auto sock = net::Socket::connect({host_, port_}, timeout_);
  sock.send_all(encode_frame({kWireVersion, FrameKind::kQuery, encode_query(q)}));

  std::vector<std::uint8_t> header(kFrameHeaderBytes);
  require(sock.recv_exact(header), ErrorCode::kTransport, "bank server closed the connection");
  const FrameHeader h = decode_frame_header(header);
  require(h.version == kWireVersion, ErrorCode::kProtocol,
          "bank server speaks wire version " + std::to_string(h.version));
  require(h.length <= kMaxPayloadBytes, ErrorCode::kProtocol, "reply payload too large");
  std::vector<std::uint8_t> payload(h.length);
  if (h.length > 0) {
    require(sock.recv_exact(payload), ErrorCode::kTransport, "bank server closed the connection");
  }
  if (h.kind == static_cast<std::uint16_t>(FrameKind::kError)) {
    const auto err = decode_error(payload);
    fail(from_wire_error_code(err.code), "bank server: " + err.message);
  }
  require(h.kind == static_cast<std::uint16_t>(FrameKind::kResult), ErrorCode::kProtocol,
          "unexpected reply kind " + std::to_string(h.kind));
  std::vector<RemoteHit> out;
  try {
    for (auto& rec : decode_result(payload)) {
      out.push_back({rec.id, rec.score, decode_memory_record(rec.codes, rec.id, &codebooks_)});
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kFormat) throw;
    fail(ErrorCode::kProtocol, std::string("malformed result: ") + e.what());
  }
  return out;
}

}  // namespace em3
