#pragma once

#include <optional>
#include <ostream>
#include <string_view>
#include <vector>

#include "em3/config.h"

namespace em3 {

// Shape inputs of the write/read cost formulas. Defaults are the 2.4B model.
struct CostParams {
  double n_layers = 44;      // L
  double n_heads = 40;       // H
  double n_kv_heads = 8;     // H_kv
  double head_dim = 80;      // d_h
  double hidden_dim = 3200;  // d
  double mlp_width = 3200;   // W
  double n_vocab = 60416;
  double n_mem_layers = 22;  // L_mem
  double ref_len = 128;      // l_ref
  double mem_tokens = 8;     // l_mem
  double chunk_len = 64;     // l_chunk
  double train_len = 2048;   // l_train

  static CostParams reference() { return {}; }
  static CostParams from_config(const ModelConfig& config, double train_len = 2048);
  // Throws kInput for non-positive shapes (l_mem may be 0) or L_mem > L.
  void validate() const;
};

// Flop counts split by component; total() sums them.
struct CostTerms {
  double projections = 0;  // Q/K/V/O
  double attention = 0;   // score and weighted-sum products
  double mlp = 0;
  double lm_head = 0;
  double sparsify = 0;    // full attention matrices for token selection

  double total() const { return projections + attention + mlp + lm_head + sparsify; }
};

CostTerms write_implicit_terms(const CostParams& p);
CostTerms write_explicit_terms(const CostParams& p);
CostTerms read_explicit_terms(const CostParams& p);
CostTerms read_external_terms(const CostParams& p);

// TFlops.
double cost_write_implicit(const CostParams& p);
double cost_write_explicit(const CostParams& p);
double cost_read_explicit(const CostParams& p);
double cost_read_external(const CostParams& p);

enum class MemoryFormat { kImplicit, kExplicit, kExternal };
const char* to_string(MemoryFormat f) noexcept;

struct AdvantageInterval {
  double lo = 0;
  double hi = 0;
};

struct CostReport {
  double write_implicit = 0;
  double write_explicit = 0;
  double write_external = 0;
  double read_implicit = 0;  // lower bound
  double read_explicit = 0;
  double read_external = 0;
  std::optional<AdvantageInterval> interval;
};

// Total cost over n uses: implicit is the flat write-cost lower bound,
// explicit = write + n * read, external = n * read.
struct FormatCosts {
  double implicit = 0;
  double explicit_ = 0;
  double external = 0;
};

CostReport cost_report(const CostParams& p);
FormatCosts format_costs(const CostReport& r, double n);
// Usage counts where explicit memory is strictly cheapest:
//   lo = w_explicit / (r_external - r_explicit), hi = (w_implicit - w_explicit) / r_explicit.
std::optional<AdvantageInterval> advantage_interval(const CostReport& r);

struct FormatChoice {
  MemoryFormat format = MemoryFormat::kExternal;
  std::optional<AdvantageInterval> interval;
};

// argmin over the three formats; ties prefer external, then explicit.
FormatChoice optimal_format(const CostParams& p, double n);
MemoryFormat cheapest(const FormatCosts& c);

struct CurveRow {
  double n = 0;
  FormatCosts costs;
  MemoryFormat argmin = MemoryFormat::kExternal;
};

// n from `from` to `to` inclusive, stepping by `step` (added, or multiplied
// when log_scale).
std::vector<CurveRow> emit_curves(const CostParams& p, double from, double to, double step,
                                  bool log_scale = false);
void write_curves_csv(std::ostream& out, const std::vector<CurveRow>& rows);

}  // namespace em3
