#include "em3/tokenizer.h"

namespace em3 {

std::vector<Token> ByteTokenizer::encode(std::string_view text) const {
  std::vector<Token> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(static_cast<Token>(static_cast<unsigned char>(c)));
  return out;
}

std::string ByteTokenizer::decode(std::span<const Token> tokens) const {
  std::string out;
  out.reserve(tokens.size());
  for (Token t : tokens) {
    if (t >= 0 && t < 256) {
      out.push_back(static_cast<char>(t));
    } else {
      out += "<|" + std::to_string(t) + "|>";
    }
  }
  return out;
}

std::vector<Token> ByteTokenizer::reference_bos() const {
  std::vector<Token> out{kBos};
  for (Token t : encode("Reference:")) out.push_back(t);
  return out;
}

}  // namespace em3
