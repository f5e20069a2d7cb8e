#include "em3/wire.h"

#include "em3/binary_io.h"

namespace em3 {
namespace {

constexpr std::string_view kWireMagic = "EM3W";

bool known_kind(std::uint16_t k) { return k >= 1 && k <= 3; }

}  // namespace

FrameHeader decode_frame_header(std::span<const std::uint8_t> header) {
  require(header.size() >= kFrameHeaderBytes, ErrorCode::kProtocol, "short frame header");
  ByteReader r(header.first(kFrameHeaderBytes));
  try {
    r.expect_magic(kWireMagic, "frame");
  } catch (const Error& e) {
    fail(ErrorCode::kProtocol, e.what());
  }
  FrameHeader h;
  h.version = r.get_u16();
  h.kind = r.get_u16();
  h.length = r.get_u32();
  return h;
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  require(frame.payload.size() <= kMaxPayloadBytes, ErrorCode::kInput, "frame payload too large");
  ByteWriter w;
  w.put_magic(kWireMagic);
  w.put_u16(frame.version);
  w.put_u16(static_cast<std::uint16_t>(frame.kind));
  w.put_u32(static_cast<std::uint32_t>(frame.payload.size()));
  w.put_bytes(frame.payload);
  return std::move(w).take();
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  const FrameHeader h = decode_frame_header(bytes);
  require(h.version == kWireVersion, ErrorCode::kProtocol,
          "unsupported wire version " + std::to_string(h.version));
  require(known_kind(h.kind), ErrorCode::kProtocol, "unknown frame kind " + std::to_string(h.kind));
  require(bytes.size() - kFrameHeaderBytes == h.length, ErrorCode::kFormat,
          "frame payload length mismatch");
  Frame f;
  f.version = h.version;
  f.kind = static_cast<FrameKind>(h.kind);
  f.payload.assign(bytes.begin() + kFrameHeaderBytes, bytes.end());
  return f;
}

std::vector<std::uint8_t> encode_query(const QueryMessage& q) {
  ByteWriter w;
  w.put_f32s(q.embedding);
  w.put_u32(q.k);
  return std::move(w).take();
}

QueryMessage decode_query(std::span<const std::uint8_t> payload) {
  require(payload.size() >= 4 && payload.size() % 4 == 0, ErrorCode::kFormat,
          "query payload of " + std::to_string(payload.size()) + " bytes is malformed");
  ByteReader r(payload);
  QueryMessage q;
  q.embedding.resize(payload.size() / 4 - 1);
  r.get_f32s(q.embedding);
  q.k = r.get_u32();
  return q;
}

std::vector<std::uint8_t> encode_result(std::span<const ResultRecord> records) {
  ByteWriter w;
  for (const auto& rec : records) {
    w.put_u64(rec.id);
    w.put_f32(rec.score);
    w.put_u32(static_cast<std::uint32_t>(rec.codes.size()));
    w.put_bytes(rec.codes);
  }
  return std::move(w).take();
}

std::vector<ResultRecord> decode_result(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  std::vector<ResultRecord> out;
  while (r.remaining() > 0) {
    ResultRecord rec;
    rec.id = r.get_u64();
    rec.score = r.get_f32();
    const std::uint32_t n = r.get_u32();
    const auto codes = r.get_bytes(n);
    rec.codes.assign(codes.begin(), codes.end());
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::uint8_t> encode_error(const ErrorMessage& e) {
  ByteWriter w;
  w.put_u16(e.code);
  w.put_u32(static_cast<std::uint32_t>(e.message.size()));
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(e.message.data()), e.message.size()});
  return std::move(w).take();
}

ErrorMessage decode_error(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  ErrorMessage e;
  e.code = r.get_u16();
  const std::uint32_t n = r.get_u32();
  const auto text = r.get_bytes(n);
  e.message.assign(text.begin(), text.end());
  require(r.remaining() == 0, ErrorCode::kFormat, "trailing bytes in error payload");
  return e;
}

std::uint16_t wire_error_code(ErrorCode code) { return static_cast<std::uint16_t>(code) + 1; }

ErrorCode from_wire_error_code(std::uint16_t code) {
  if (code == 0 || code > static_cast<std::uint16_t>(ErrorCode::kProtocol) + 1) {
    return ErrorCode::kProtocol;
  }
  return static_cast<ErrorCode>(code - 1);
}

}  // namespace em3
