#include "em3/train_layout.h"

#include <algorithm>

#include "em3/error.h"

namespace em3 {

bool TrainLayout::sees(int chunk, int slot) const {
  return chunk >= 0 && chunk < n_chunks && slot <= chunk && slot >= std::max(0, chunk - window);
}

std::vector<std::uint8_t> TrainLayout::mask() const {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(n_chunks) * n_chunks, 0);
  for (int c = 0; c < n_chunks; ++c) {
    for (int s : visible[c]) m[static_cast<std::size_t>(c) * n_chunks + s] = 1;
  }
  return m;
}

std::vector<std::uint8_t> TrainLayout::token_mask() const {
  const std::size_t cols = static_cast<std::size_t>(n_chunks) * ref_len;
  std::vector<std::uint8_t> m(static_cast<std::size_t>(seq_len) * cols, 0);
  for (int t = 0; t < seq_len; ++t) {
    const int c = t / chunk_size;
    for (int s : visible[c]) {
      auto row = m.begin() + static_cast<std::ptrdiff_t>(t * cols + std::size_t(s) * ref_len);
      std::fill(row, row + ref_len, std::uint8_t{1});
    }
  }
  return m;
}

TrainLayout build_train_layout(int seq_len, int chunk_size, int ref_len, int window) {
  require(chunk_size > 0 && seq_len > 0, ErrorCode::kInput, "lengths must be positive");
  require(seq_len % chunk_size == 0, ErrorCode::kInput,
          "seq_len " + std::to_string(seq_len) + " is not a multiple of chunk size " +
              std::to_string(chunk_size));
  require(ref_len > 0 && window >= 0, ErrorCode::kInput, "bad ref_len or window");
  TrainLayout l;
  l.seq_len = seq_len;
  l.chunk_size = chunk_size;
  l.window = window;
  l.ref_len = ref_len;
  l.n_chunks = seq_len / chunk_size;
  l.visible.resize(l.n_chunks);
  for (int c = 0; c < l.n_chunks; ++c) {
    for (int s = std::max(0, c - window); s <= c; ++s) l.visible[c].push_back(s);
  }
  return l;
}

}  // namespace em3
