#include "em3/binary_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "em3/error.h"

namespace em3 {

void ByteWriter::put_u16(std::uint16_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v));
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::put_f32s(std::span<const float> v) {
  buf_.reserve(buf_.size() + v.size() * 4);
  for (float x : v) put_f32(x);
}

void ByteWriter::put_bytes(std::span<const std::uint8_t> v) {
  buf_.insert(buf_.end(), v.begin(), v.end());
}

void ByteWriter::put_magic(std::string_view four_chars) {
  for (char c : four_chars.substr(0, 4)) buf_.push_back(static_cast<std::uint8_t>(c));
}

void ByteWriter::patch_u64(std::size_t at, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.at(at + i) = static_cast<std::uint8_t>(v >> (8 * i));
}

void ByteReader::need(std::size_t n) const {
  if (n > data_.size() - pos_) {
    fail(ErrorCode::kFormat, "unexpected end of data at byte " + std::to_string(pos_) +
                                 " (need " + std::to_string(n) + ", have " +
                                 std::to_string(data_.size() - pos_) + ")");
  }
}

std::uint8_t ByteReader::get_u8() {
  need(1);
  return data_[pos_++];
}

std::uint16_t ByteReader::get_u16() {
  need(2);
  std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::get_u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::get_u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

float ByteReader::get_f32() { return std::bit_cast<float>(get_u32()); }

void ByteReader::get_f32s(std::span<float> out) {
  need(out.size() * 4);
  for (float& x : out) x = get_f32();
}

std::span<const std::uint8_t> ByteReader::get_bytes(std::size_t n) {
  need(n);
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

void ByteReader::expect_magic(std::string_view four_chars, std::string_view what) {
  need(4);
  if (std::memcmp(data_.data() + pos_, four_chars.data(), 4) != 0) {
    fail(ErrorCode::kFormat, "bad magic for " + std::string(what) + ", expected '" +
                                 std::string(four_chars) + "'");
  }
  pos_ += 4;
}

void ByteReader::seek(std::size_t pos) {
  if (pos > data_.size()) fail(ErrorCode::kFormat, "seek past end of data");
  pos_ = pos;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::kIo, "read failed for '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

void Fnv1a::update(std::span<const std::uint8_t> bytes) {
  for (std::uint8_t b : bytes) {
    state_ ^= b;
    state_ *= 0x100000001b3ULL;
  }
}

void Fnv1a::update_u64(std::uint64_t v) {
  std::uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  update(b);
}

void Fnv1a::update_f32s(std::span<const float> v) {
  for (float x : v) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(x);
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(u >> (8 * i));
    update(b);
  }
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.digest();
}

}  // namespace em3
