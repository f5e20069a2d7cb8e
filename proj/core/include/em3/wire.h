#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "em3/error.h"

namespace em3 {

// Frame: "EM3W", u16 version, u16 kind, u32 payload length, payload.
// All integers little-endian.
enum class FrameKind : std::uint16_t { kQuery = 1, kResult = 2, kError = 3 };

inline constexpr std::uint16_t kWireVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 12;
inline constexpr std::uint32_t kMaxPayloadBytes = 64u << 20;

struct FrameHeader {
  std::uint16_t version = kWireVersion;
  std::uint16_t kind = 0;
  std::uint32_t length = 0;
};

struct Frame {
  std::uint16_t version = kWireVersion;
  FrameKind kind = FrameKind::kQuery;
  std::vector<std::uint8_t> payload;

  bool operator==(const Frame&) const = default;
};

// Throws kProtocol on a bad magic. Version and kind are returned unchecked.
FrameHeader decode_frame_header(std::span<const std::uint8_t> header);

std::vector<std::uint8_t> encode_frame(const Frame& frame);
// Throws kProtocol for bad magic, version or kind; kFormat when the payload
// length disagrees with the header.
Frame decode_frame(std::span<const std::uint8_t> bytes);

// Query payload: e x f32 embedding, u32 k.
struct QueryMessage {
  std::vector<float> embedding;
  std::uint32_t k = 0;

  bool operator==(const QueryMessage&) const = default;
};

// Result payload: records of (u64 id, f32 score, u32 length, length bytes),
// until the end of the payload.
struct ResultRecord {
  std::uint64_t id = 0;
  float score = 0.0f;
  std::vector<std::uint8_t> codes;

  bool operator==(const ResultRecord&) const = default;
};

// Error payload: u16 code, u32 length, UTF-8 message.
struct ErrorMessage {
  std::uint16_t code = 0;
  std::string message;

  bool operator==(const ErrorMessage&) const = default;
};

std::vector<std::uint8_t> encode_query(const QueryMessage& q);
QueryMessage decode_query(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_result(std::span<const ResultRecord> records);
std::vector<ResultRecord> decode_result(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_error(const ErrorMessage& e);
ErrorMessage decode_error(std::span<const std::uint8_t> payload);

std::uint16_t wire_error_code(ErrorCode code);
ErrorCode from_wire_error_code(std::uint16_t code);

}  // namespace em3
