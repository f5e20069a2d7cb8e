#include "em3/quantizer.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "em3/error.h"

namespace em3 {
namespace {

constexpr std::string_view kCodebookMagic = "EM3Q";
constexpr std::uint16_t kCodebookVersion = 1;

std::size_t sz(int a) { return static_cast<std::size_t>(a); }

float sq_dist(const float* a, const float* b, int n) {
  float acc = 0.0f;
  for (int i = 0; i < n; ++i) {
    const float d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

int nearest(const float* x, const float* centroids, int k, int dim) {
  int best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (int c = 0; c < k; ++c) {
    const float d = sq_dist(x, centroids + sz(c) * sz(dim), dim);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// Lloyd's algorithm with k-means++ seeding. data is [n][dim].
std::vector<float> kmeans(const std::vector<float>& data, int n, int dim, int k, int iterations,
                          std::mt19937_64& rng) {
  std::vector<float> centroids(sz(k) * sz(dim));
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> d2(sz(n), std::numeric_limits<double>::infinity());
  int first = pick(rng);
  std::copy_n(data.data() + sz(first) * sz(dim), dim, centroids.data());
  for (int c = 1; c < k; ++c) {
    const float* prev = centroids.data() + sz(c - 1) * sz(dim);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      d2[sz(i)] = std::min(d2[sz(i)],
                           static_cast<double>(sq_dist(data.data() + sz(i) * sz(dim), prev, dim)));
      total += d2[sz(i)];
    }
    int chosen = 0;
    if (total > 0.0) {
      double target = unit(rng) * total;
      for (int i = 0; i < n; ++i) {
        target -= d2[sz(i)];
        if (target <= 0.0) {
          chosen = i;
          break;
        }
        chosen = i;
      }
    } else {
      chosen = pick(rng);
    }
    std::copy_n(data.data() + sz(chosen) * sz(dim), dim, centroids.data() + sz(c) * sz(dim));
  }

  std::vector<int> assignment(sz(n), -1);
  std::vector<double> sums(sz(k) * sz(dim));
  std::vector<int> counts(sz(k));
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int a = nearest(data.data() + sz(i) * sz(dim), centroids.data(), k, dim);
      if (a != assignment[sz(i)]) changed = true;
      assignment[sz(i)] = a;
    }
    if (!changed && it > 0) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      const int a = assignment[sz(i)];
      ++counts[sz(a)];
      for (int j = 0; j < dim; ++j) {
        sums[sz(a) * sz(dim) + sz(j)] += data[sz(i) * sz(dim) + sz(j)];
      }
    }
    for (int c = 0; c < k; ++c) {
      if (counts[sz(c)] == 0) {
        // Re-seed an empty cluster at the point farthest from its centroid.
        int far = 0;
        float far_d = -1.0f;
        for (int i = 0; i < n; ++i) {
          const float d = sq_dist(data.data() + sz(i) * sz(dim),
                                  centroids.data() + sz(assignment[sz(i)]) * sz(dim), dim);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        std::copy_n(data.data() + sz(far) * sz(dim), dim, centroids.data() + sz(c) * sz(dim));
        assignment[sz(far)] = c;
        continue;
      }
      for (int j = 0; j < dim; ++j) {
        centroids[sz(c) * sz(dim) + sz(j)] =
            static_cast<float>(sums[sz(c) * sz(dim) + sz(j)] / counts[sz(c)]);
      }
    }
  }
  return centroids;
}

std::vector<float> pca_rotation(std::span<const float> samples, int n, int dim, int n_sub) {
  Eigen::MatrixXd x(n, dim);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) x(i, j) = samples[sz(i) * sz(dim) + sz(j)];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / std::max(1, n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorCode::kTraining, "PCA eigen-decomposition failed");
  const Eigen::MatrixXd& vecs = solver.eigenvectors();  // ascending eigenvalues

  // Eigenvectors by descending variance, dealt round-robin so each level-1
  // subvector receives a similar share of the variance.
  const int sub_dim = dim / n_sub;
  std::vector<float> rotation(sz(dim) * sz(dim));
  for (int rank = 0; rank < dim; ++rank) {
    const int col = dim - 1 - rank;
    const int row = (rank % n_sub) * sub_dim + rank / n_sub;
    for (int j = 0; j < dim; ++j) {
      rotation[sz(row) * sz(dim) + sz(j)] = static_cast<float>(vecs(j, col));
    }
  }
  return rotation;
}

}  // namespace

int QuantizerGeometry::code_bits() const {
  int bits = 0;
  for (const auto& l : levels) bits += l.n_subvectors * l.n_bits;
  return bits;
}

int QuantizerGeometry::code_bytes() const { return (code_bits() + 7) / 8; }

double QuantizerGeometry::compression_rate(int bytes_per_scalar) const {
  return static_cast<double>(dim) * bytes_per_scalar / code_bytes();
}

void QuantizerGeometry::validate() const {
  require(dim > 0, ErrorCode::kConfig, "quantizer dim must be positive");
  require(!levels.empty(), ErrorCode::kConfig, "quantizer needs at least one level");
  for (const auto& l : levels) {
    require(l.n_subvectors > 0 && dim % l.n_subvectors == 0, ErrorCode::kConfig,
            "subvector count must divide the dimension");
    require(l.n_bits >= 1 && l.n_bits <= 24, ErrorCode::kConfig,
            "code width must be 1..24 bits");
  }
}

QuantizerGeometry QuantizerGeometry::reference() {
  return {80, {{2, 14}, {8, 10}}};
}

QuantizerGeometry QuantizerGeometry::desk(int dim) { return {dim, {{2, 4}, {2, 4}}}; }

Codebook Codebook::from_parts(QuantizerGeometry geometry, std::vector<float> rotation,
                              std::vector<std::vector<float>> centroids) {
  geometry.validate();
  const std::size_t dim = sz(geometry.dim);
  require(rotation.size() == dim * dim, ErrorCode::kShape, "rotation must be dim x dim");
  require(centroids.size() == geometry.levels.size(), ErrorCode::kShape,
          "one centroid table per level required");
  for (std::size_t l = 0; l < centroids.size(); ++l) {
    const auto& lv = geometry.levels[l];
    require(centroids[l].size() == sz(lv.n_centroids()) * dim, ErrorCode::kShape,
            "centroid table size mismatch at level " + std::to_string(l));
  }
  Codebook cb;
  cb.geometry_ = std::move(geometry);
  cb.rotation_ = std::move(rotation);
  cb.centroids_ = std::move(centroids);
  cb.trained_ = true;
  return cb;
}

std::span<const float> Codebook::centroid(int level, int sub, int index) const {
  const auto& lv = geometry_.levels[sz(level)];
  const int sub_dim = geometry_.dim / lv.n_subvectors;
  return {centroids_[sz(level)].data() +
              (sz(sub) * sz(lv.n_centroids()) + sz(index)) * sz(sub_dim),
          sz(sub_dim)};
}

std::vector<float> Codebook::rotate(std::span<const float> v) const {
  const int dim = geometry_.dim;
  std::vector<float> out(sz(dim));
  for (int i = 0; i < dim; ++i) {
    float acc = 0.0f;
    for (int j = 0; j < dim; ++j) acc += rotation_[sz(i) * sz(dim) + sz(j)] * v[sz(j)];
    out[sz(i)] = acc;
  }
  return out;
}

std::vector<std::uint32_t> Codebook::assign(std::span<const float> v) const {
  require(trained_, ErrorCode::kState, "codebook is not trained");
  require(v.size() == sz(geometry_.dim), ErrorCode::kShape, "vector dimension mismatch");
  std::vector<float> residual = rotate(v);
  std::vector<std::uint32_t> codes;
  for (std::size_t l = 0; l < geometry_.levels.size(); ++l) {
    const auto& lv = geometry_.levels[l];
    const int sub_dim = geometry_.dim / lv.n_subvectors;
    for (int s = 0; s < lv.n_subvectors; ++s) {
      float* slice = residual.data() + sz(s) * sz(sub_dim);
      const float* table = centroids_[l].data() + sz(s) * sz(lv.n_centroids()) * sz(sub_dim);
      const int c = nearest(slice, table, lv.n_centroids(), sub_dim);
      codes.push_back(static_cast<std::uint32_t>(c));
      const float* cv = table + sz(c) * sz(sub_dim);
      for (int j = 0; j < sub_dim; ++j) slice[j] -= cv[j];
    }
  }
  return codes;
}

std::vector<std::uint8_t> Codebook::pack(std::span<const std::uint32_t> sub_codes) const {
  std::vector<std::uint8_t> out(sz(geometry_.code_bytes()), 0);
  std::size_t bit = 0;
  std::size_t idx = 0;
  for (const auto& lv : geometry_.levels) {
    for (int s = 0; s < lv.n_subvectors; ++s, ++idx) {
      const std::uint32_t c = sub_codes[idx];
      for (int b = 0; b < lv.n_bits; ++b, ++bit) {
        if ((c >> b) & 1u) out[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
      }
    }
  }
  return out;
}

std::vector<std::uint32_t> Codebook::unpack(std::span<const std::uint8_t> code) const {
  require(code.size() == sz(geometry_.code_bytes()), ErrorCode::kFormat,
          "code length " + std::to_string(code.size()) + " does not match " +
              std::to_string(geometry_.code_bytes()));
  std::vector<std::uint32_t> out;
  std::size_t bit = 0;
  for (const auto& lv : geometry_.levels) {
    for (int s = 0; s < lv.n_subvectors; ++s) {
      std::uint32_t c = 0;
      for (int b = 0; b < lv.n_bits; ++b, ++bit) {
        if ((code[bit / 8] >> (bit % 8)) & 1u) c |= 1u << b;
      }
      out.push_back(c);
    }
  }
  return out;
}

std::vector<std::uint8_t> Codebook::encode(std::span<const float> v) const {
  return pack(assign(v));
}

void Codebook::encode_into(std::span<const float> v, std::span<std::uint8_t> out) const {
  const auto code = encode(v);
  require(out.size() == code.size(), ErrorCode::kShape, "code buffer size mismatch");
  std::copy(code.begin(), code.end(), out.begin());
}

void Codebook::decode_into(std::span<const std::uint8_t> code, std::span<float> out) const {
  require(trained_, ErrorCode::kState, "codebook is not trained");
  require(out.size() == sz(geometry_.dim), ErrorCode::kShape, "output dimension mismatch");
  const auto sub_codes = unpack(code);
  const int dim = geometry_.dim;
  std::vector<float> rotated(sz(dim), 0.0f);
  std::size_t idx = 0;
  for (std::size_t l = 0; l < geometry_.levels.size(); ++l) {
    const auto& lv = geometry_.levels[l];
    const int sub_dim = dim / lv.n_subvectors;
    for (int s = 0; s < lv.n_subvectors; ++s, ++idx) {
      const auto c = centroid(static_cast<int>(l), s, static_cast<int>(sub_codes[idx]));
      for (int j = 0; j < sub_dim; ++j) rotated[sz(s) * sz(sub_dim) + sz(j)] += c[sz(j)];
    }
  }
  for (int j = 0; j < dim; ++j) {
    float acc = 0.0f;
    for (int i = 0; i < dim; ++i) acc += rotation_[sz(i) * sz(dim) + sz(j)] * rotated[sz(i)];
    out[sz(j)] = acc;
  }
}

std::vector<float> Codebook::decode(std::span<const std::uint8_t> code) const {
  std::vector<float> out(sz(geometry_.dim));
  decode_into(code, out);
  return out;
}

void Codebook::write(ByteWriter& w) const {
  require(trained_, ErrorCode::kState, "cannot write an untrained codebook");
  w.put_u32(static_cast<std::uint32_t>(geometry_.dim));
  w.put_u32(static_cast<std::uint32_t>(geometry_.levels.size()));
  for (const auto& lv : geometry_.levels) {
    w.put_u32(static_cast<std::uint32_t>(lv.n_subvectors));
    w.put_u32(static_cast<std::uint32_t>(lv.n_bits));
  }
  w.put_f32s(rotation_);
  for (const auto& c : centroids_) w.put_f32s(c);
}

Codebook Codebook::read(ByteReader& r) {
  QuantizerGeometry g;
  g.dim = static_cast<int>(r.get_u32());
  const std::uint32_t n_levels = r.get_u32();
  require(n_levels >= 1 && n_levels <= 16, ErrorCode::kFormat, "implausible level count");
  for (std::uint32_t l = 0; l < n_levels; ++l) {
    QuantLevel lv;
    lv.n_subvectors = static_cast<int>(r.get_u32());
    lv.n_bits = static_cast<int>(r.get_u32());
    g.levels.push_back(lv);
  }
  require(g.dim > 0 && g.dim <= 4096, ErrorCode::kFormat, "implausible codebook dimension");
  g.validate();
  std::vector<float> rotation(sz(g.dim) * sz(g.dim));
  r.get_f32s(rotation);
  std::vector<std::vector<float>> centroids;
  for (const auto& lv : g.levels) {
    std::vector<float> c(sz(lv.n_centroids()) * sz(g.dim));
    r.get_f32s(c);
    centroids.push_back(std::move(c));
  }
  return from_parts(std::move(g), std::move(rotation), std::move(centroids));
}

Codebook quantizer_train(std::span<const float> samples, const QuantizerGeometry& geometry,
                         const QuantizerTrainOptions& options) {
  geometry.validate();
  const int dim = geometry.dim;
  require(samples.size() % sz(dim) == 0, ErrorCode::kShape, "samples must be [n][dim]");
  const int n = static_cast<int>(samples.size() / sz(dim));
  for (const auto& lv : geometry.levels) {
    require(n >= lv.n_centroids(), ErrorCode::kTraining,
            "need at least " + std::to_string(lv.n_centroids()) + " samples, got " +
                std::to_string(n));
  }

  std::mt19937_64 rng(options.seed);
  auto rotation = pca_rotation(samples, n, dim, geometry.levels[0].n_subvectors);

  // Residuals in rotated space.
  std::vector<float> residual(samples.size());
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < dim; ++r) {
      float acc = 0.0f;
      for (int j = 0; j < dim; ++j) {
        acc += rotation[sz(r) * sz(dim) + sz(j)] * samples[sz(i) * sz(dim) + sz(j)];
      }
      residual[sz(i) * sz(dim) + sz(r)] = acc;
    }
  }

  std::vector<std::vector<float>> tables;
  for (const auto& lv : geometry.levels) {
    const int sub_dim = dim / lv.n_subvectors;
    const int k = lv.n_centroids();
    std::vector<float> table(sz(lv.n_subvectors) * sz(k) * sz(sub_dim));
    std::vector<float> slice(sz(n) * sz(sub_dim));
    for (int s = 0; s < lv.n_subvectors; ++s) {
      for (int i = 0; i < n; ++i) {
        std::copy_n(residual.data() + sz(i) * sz(dim) + sz(s) * sz(sub_dim), sub_dim,
                    slice.data() + sz(i) * sz(sub_dim));
      }
      auto cents = kmeans(slice, n, sub_dim, k, options.kmeans_iterations, rng);
      std::copy(cents.begin(), cents.end(),
                table.begin() + static_cast<std::ptrdiff_t>(sz(s) * sz(k) * sz(sub_dim)));
      for (int i = 0; i < n; ++i) {
        float* x = residual.data() + sz(i) * sz(dim) + sz(s) * sz(sub_dim);
        const float* c = cents.data() + sz(nearest(x, cents.data(), k, sub_dim)) * sz(sub_dim);
        for (int j = 0; j < sub_dim; ++j) x[j] -= c[j];
      }
    }
    tables.push_back(std::move(table));
  }
  return Codebook::from_parts(geometry, std::move(rotation), std::move(tables));
}

double reconstruction_mse(const Codebook& codebook, std::span<const float> samples) {
  const int dim = codebook.geometry().dim;
  const std::size_t n = samples.size() / sz(dim);
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto v = samples.subspan(i * sz(dim), sz(dim));
    const auto rec = codebook.decode(codebook.encode(v));
    for (int j = 0; j < dim; ++j) {
      const double d = static_cast<double>(v[sz(j)]) - rec[sz(j)];
      total += d * d;
    }
  }
  return total / static_cast<double>(n * sz(dim));
}

void save_codebooks(const std::filesystem::path& path, const MemoryCodebooks& codebooks) {
  ByteWriter w;
  w.put_magic(kCodebookMagic);
  w.put_u16(kCodebookVersion);
  w.put_u16(2);
  codebooks.keys.write(w);
  codebooks.values.write(w);
  write_file(path, w.bytes());
}

MemoryCodebooks load_codebooks(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  r.expect_magic(kCodebookMagic, "codebook file");
  const std::uint16_t version = r.get_u16();
  require(version == kCodebookVersion, ErrorCode::kCompatibility,
          "unsupported codebook version " + std::to_string(version));
  require(r.get_u16() == 2, ErrorCode::kFormat, "codebook file must hold key and value books");
  MemoryCodebooks out;
  out.keys = Codebook::read(r);
  out.values = Codebook::read(r);
  return out;
}

}  // namespace em3
