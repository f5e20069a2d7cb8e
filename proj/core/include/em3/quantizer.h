#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "em3/binary_io.h"

namespace em3 {

// One residual level of product quantization: the (rotated) vector, or the
// residual left by earlier levels, is cut into n_subvectors equal slices and
// each slice is replaced by the index of its nearest centroid.
struct QuantLevel {
  int n_subvectors = 1;
  int n_bits = 8;

  int n_centroids() const { return 1 << n_bits; }
  bool operator==(const QuantLevel&) const = default;
};

struct QuantizerGeometry {
  int dim = 0;
  std::vector<QuantLevel> levels;

  int code_bits() const;
  // Codes are bit-packed, least significant bit first.
  int code_bytes() const;
  // Raw bytes (dim * bytes_per_scalar) over code bytes.
  double compression_rate(int bytes_per_scalar = 2) const;
  void validate() const;

  // 80 dims: a 2x14-bit coarse level then an 8x10-bit product level,
  // 108 bits packed into 14 bytes.
  static QuantizerGeometry reference();
  // Two levels of 2 subvectors x 16 centroids.
  static QuantizerGeometry desk(int dim);

  bool operator==(const QuantizerGeometry&) const = default;
};

struct QuantizerTrainOptions {
  int kmeans_iterations = 20;
  std::uint64_t seed = 0;
};

// Orthonormal rotation followed by residual product quantization.
// rotate(v) = R v, decode(code) = R^T (sum over levels of selected centroids).
class Codebook {
 public:
  Codebook() = default;

  // centroids[level] is [subvector][centroid][dim / n_subvectors].
  static Codebook from_parts(QuantizerGeometry geometry, std::vector<float> rotation,
                             std::vector<std::vector<float>> centroids);

  bool trained() const { return trained_; }
  const QuantizerGeometry& geometry() const { return geometry_; }
  std::span<const float> rotation() const { return rotation_; }
  std::span<const float> centroid(int level, int sub, int index) const;

  // Per-level sub-codes, in (level, subvector) order.
  std::vector<std::uint32_t> assign(std::span<const float> v) const;
  std::vector<std::uint8_t> encode(std::span<const float> v) const;
  void encode_into(std::span<const float> v, std::span<std::uint8_t> out) const;
  std::vector<float> decode(std::span<const std::uint8_t> code) const;
  void decode_into(std::span<const std::uint8_t> code, std::span<float> out) const;

  std::vector<std::uint32_t> unpack(std::span<const std::uint8_t> code) const;
  std::vector<std::uint8_t> pack(std::span<const std::uint32_t> sub_codes) const;

  std::vector<float> rotate(std::span<const float> v) const;

  void write(ByteWriter& w) const;
  static Codebook read(ByteReader& r);

  bool operator==(const Codebook&) const = default;

 private:
  QuantizerGeometry geometry_;
  std::vector<float> rotation_;                // [dim][dim]
  std::vector<std::vector<float>> centroids_;  // per level
  bool trained_ = false;
};

// samples is [n][dim]. Rotation from PCA of the samples (eigenvectors dealt
// round-robin across level-1 subvectors); each level is k-means on the
// residual of the previous ones. Throws ErrorCode::kTraining when there are
// fewer samples than centroids.
Codebook quantizer_train(std::span<const float> samples, const QuantizerGeometry& geometry,
                         const QuantizerTrainOptions& options = {});

// Mean squared reconstruction error over [n][dim] samples.
double reconstruction_mse(const Codebook& codebook, std::span<const float> samples);

// The two codebooks used for explicit memories: one for keys, one for values.
struct MemoryCodebooks {
  Codebook keys;
  Codebook values;

  bool operator==(const MemoryCodebooks&) const = default;
};

void save_codebooks(const std::filesystem::path& path, const MemoryCodebooks& codebooks);
MemoryCodebooks load_codebooks(const std::filesystem::path& path);

}  // namespace em3
