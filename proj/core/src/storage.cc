#include "em3/error.h"
#include "em3/memory_bank.h"

namespace em3 {

StorageReport storage_report(const ModelConfig& c, double n_refs, int bytes_per_scalar,
                             const std::optional<QuantizerGeometry>& quantizer) {
  require(n_refs >= 0, ErrorCode::kInput, "n_refs must be non-negative");
  require(bytes_per_scalar > 0, ErrorCode::kInput, "bytes_per_scalar must be positive");
  using u64 = std::uint64_t;
  // Per-reference element counts are exact integers; the ratio is exact too.
  const u64 full_per_ref = u64(c.n_layers) * 2 * u64(c.n_heads) * u64(c.ref_len) * u64(c.head_dim);
  const u64 sparse_per_ref =
      u64(c.n_mem_layers) * 2 * u64(c.n_kv_heads) * u64(c.mem_tokens) * u64(c.head_dim);

  StorageReport r;
  r.full_bytes = n_refs * static_cast<double>(full_per_ref) * bytes_per_scalar;
  r.sparse_bytes = n_refs * static_cast<double>(sparse_per_ref) * bytes_per_scalar;
  r.sparsity_factor = static_cast<double>(full_per_ref) / static_cast<double>(sparse_per_ref);
  r.quant_ratio = quantizer ? quantizer->compression_rate(bytes_per_scalar) : 1.0;
  r.quantized_bytes = r.sparse_bytes / r.quant_ratio;
  r.total_compression = r.sparsity_factor * r.quant_ratio;
  return r;
}

}  // namespace em3
