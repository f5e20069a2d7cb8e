#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace em3 {

// Little-endian serialization helpers shared by every on-disk and on-wire format.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(v); }
  void put_u16(std::uint16_t v);
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_i32(std::int32_t v) { put_u32(static_cast<std::uint32_t>(v)); }
  void put_f32(float v);
  void put_f32s(std::span<const float> v);
  void put_bytes(std::span<const std::uint8_t> v);
  void put_magic(std::string_view four_chars);

  // Overwrite a previously written u64 (used to back-patch offsets).
  void patch_u64(std::size_t at, std::uint64_t v);

  std::size_t size() const { return buf_.size(); }
  const std::vector<std::uint8_t>& bytes() const& { return buf_; }
  std::vector<std::uint8_t> take() && { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

// Bounds-checked reader; every short read throws a format error.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t get_u8();
  std::uint16_t get_u16();
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  std::int32_t get_i32() { return static_cast<std::int32_t>(get_u32()); }
  float get_f32();
  void get_f32s(std::span<float> out);
  std::span<const std::uint8_t> get_bytes(std::size_t n);
  // Throws a format error when the next four bytes differ from `four_chars`.
  void expect_magic(std::string_view four_chars, std::string_view what);

  void seek(std::size_t pos);
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// 64-bit FNV-1a, used for config/model fingerprints and file checksums.
class Fnv1a {
 public:
  void update(std::span<const std::uint8_t> bytes);
  void update_u64(std::uint64_t v);
  void update_f32s(std::span<const float> v);
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);

}  // namespace em3
