#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "em3/config.h"

namespace em3 {

// Byte-level tokenizer: ids 0..255 are raw bytes, followed by a few specials.
class ByteTokenizer {
 public:
  static constexpr Token kBos = 256;
  static constexpr Token kEos = 257;
  static constexpr Token kPad = 258;
  static constexpr int kMinVocab = 259;

  std::vector<Token> encode(std::string_view text) const;
  // Non-byte ids render as "<|id|>".
  std::string decode(std::span<const Token> tokens) const;

  // "<s>Reference:"
  std::vector<Token> reference_bos() const;
};

}  // namespace em3
