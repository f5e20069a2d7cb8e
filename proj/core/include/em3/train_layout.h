#pragma once

#include <cstdint>
#include <vector>

namespace em3 {

// Reference-sharing layout for continual training: every chunk of a training
// sequence owns one reference slot and also attends to the slots of the
// previous `window` chunks.
struct TrainLayout {
  int seq_len = 0;
  int chunk_size = 0;
  int window = 0;
  int ref_len = 0;
  int n_chunks = 0;
  std::vector<std::vector<int>> visible;  // per chunk, ascending slot ids

  int reference_tokens() const { return n_chunks * ref_len; }
  bool sees(int chunk, int slot) const;
  // Row-major [chunk][slot], 1 where the chunk may attend to the slot.
  std::vector<std::uint8_t> mask() const;
  // Per-token expansion, [seq_len][n_chunks * ref_len].
  std::vector<std::uint8_t> token_mask() const;
};

// Throws kInput when seq_len is not a positive multiple of chunk_size.
TrainLayout build_train_layout(int seq_len, int chunk_size, int ref_len, int window = 4);

}  // namespace em3
