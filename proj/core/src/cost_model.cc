#include "em3/cost_model.h"

#include <cmath>
#include <iomanip>
#include <limits>

#include "em3/error.h"

namespace em3 {
namespace {

constexpr double kTera = 1e12;

// Per-token weights of Q, O (d x d) and K, V (d x d_h H_kv).
double proj(const CostParams& p) {
  const double d = p.hidden_dim;
  return 2 * d * d + 2 * d * p.head_dim * p.n_kv_heads;
}

double mlp(const CostParams& p) { return 3 * p.hidden_dim * p.mlp_width; }

}  // namespace

CostParams CostParams::from_config(const ModelConfig& c, double train_len) {
  CostParams p;
  p.n_layers = c.n_layers;
  p.n_heads = c.n_heads;
  p.n_kv_heads = c.n_kv_heads;
  p.head_dim = c.head_dim;
  p.hidden_dim = c.hidden_dim;
  p.mlp_width = c.mlp_width;
  p.n_vocab = c.n_vocab;
  p.n_mem_layers = c.n_mem_layers;
  p.ref_len = c.ref_len;
  p.mem_tokens = c.mem_tokens;
  p.chunk_len = c.chunk_len;
  p.train_len = train_len;
  return p;
}

void CostParams::validate() const {
  const std::pair<const char*, double> positive[] = {
      {"L", n_layers},         {"H", n_heads},       {"H_kv", n_kv_heads},
      {"d_h", head_dim},       {"d", hidden_dim},    {"W", mlp_width},
      {"n_vocab", n_vocab},    {"L_mem", n_mem_layers}, {"l_ref", ref_len},
      {"l_chunk", chunk_len},  {"l_train", train_len}};
  for (const auto& [name, v] : positive) {
    require(std::isfinite(v) && v > 0, ErrorCode::kInput,
            std::string(name) + " must be positive");
  }
  require(std::isfinite(mem_tokens) && mem_tokens >= 0, ErrorCode::kInput,
          "l_mem must be non-negative");
  require(n_mem_layers <= n_layers, ErrorCode::kInput, "L_mem cannot exceed L");
}

CostTerms write_implicit_terms(const CostParams& p) {
  // Training one l_ref segment of an l_train sequence: forward + backward = 3x.
  const double k = 3 * 2;
  CostTerms t;
  t.projections = k * p.n_layers * p.ref_len * proj(p);
  t.mlp = k * p.n_layers * p.ref_len * mlp(p);
  t.attention = k * p.n_layers * 2 * p.ref_len * (p.train_len / 2) * p.hidden_dim;
  t.lm_head = k * p.ref_len * p.n_vocab * p.hidden_dim;
  return t;
}

CostTerms write_explicit_terms(const CostParams& p) {
  CostTerms t;
  t.projections = 2 * p.n_mem_layers * p.ref_len * proj(p);
  t.attention = 2 * p.n_mem_layers * 2 * (p.ref_len * p.ref_len / 2) * p.hidden_dim;
  t.mlp = 2 * (p.n_mem_layers - 1) * p.ref_len * mlp(p);
  t.sparsify = 2 * p.n_mem_layers * p.ref_len * p.ref_len * p.hidden_dim;
  return t;
}

CostTerms read_explicit_terms(const CostParams& p) {
  CostTerms t;
  t.attention = 2 * p.n_mem_layers * 2 * p.chunk_len * p.mem_tokens * p.hidden_dim;
  return t;
}

CostTerms read_external_terms(const CostParams& p) {
  CostTerms t;
  t.projections = 2 * p.n_layers * p.ref_len * proj(p);
  t.attention = 2 * p.n_layers * 2 * p.ref_len * (p.ref_len / 2 + p.chunk_len) * p.hidden_dim;
  t.mlp = 2 * (p.n_layers - 1) * p.ref_len * mlp(p);
  return t;
}

double cost_write_implicit(const CostParams& p) { return write_implicit_terms(p).total() / kTera; }
double cost_write_explicit(const CostParams& p) { return write_explicit_terms(p).total() / kTera; }
double cost_read_explicit(const CostParams& p) { return read_explicit_terms(p).total() / kTera; }
double cost_read_external(const CostParams& p) { return read_external_terms(p).total() / kTera; }

const char* to_string(MemoryFormat f) noexcept {
  switch (f) {
    case MemoryFormat::kImplicit: return "implicit";
    case MemoryFormat::kExplicit: return "explicit";
    case MemoryFormat::kExternal: return "external";
  }
  return "?";
}

CostReport cost_report(const CostParams& p) {
  p.validate();
  CostReport r;
  r.write_implicit = cost_write_implicit(p);
  r.write_explicit = cost_write_explicit(p);
  r.write_external = 0;
  r.read_implicit = 0;
  r.read_explicit = cost_read_explicit(p);
  r.read_external = cost_read_external(p);
  r.interval = advantage_interval(r);
  return r;
}

FormatCosts format_costs(const CostReport& r, double n) {
  return {r.write_implicit, r.write_explicit + n * r.read_explicit,
          r.write_external + n * r.read_external};
}

std::optional<AdvantageInterval> advantage_interval(const CostReport& r) {
  if (r.read_external <= r.read_explicit) return std::nullopt;
  AdvantageInterval a;
  a.lo = r.write_explicit / (r.read_external - r.read_explicit);
  a.hi = r.read_explicit > 0 ? (r.write_implicit - r.write_explicit) / r.read_explicit
                             : std::numeric_limits<double>::infinity();
  if (!(a.lo < a.hi)) return std::nullopt;
  return a;
}

MemoryFormat cheapest(const FormatCosts& c) {
  MemoryFormat best = MemoryFormat::kExternal;
  double cost = c.external;
  if (c.explicit_ < cost) {
    best = MemoryFormat::kExplicit;
    cost = c.explicit_;
  }
  if (c.implicit < cost) best = MemoryFormat::kImplicit;
  return best;
}

FormatChoice optimal_format(const CostParams& p, double n) {
  require(n >= 0, ErrorCode::kInput, "usage count must be non-negative");
  const CostReport r = cost_report(p);
  return {cheapest(format_costs(r, n)), r.interval};
}

std::vector<CurveRow> emit_curves(const CostParams& p, double from, double to, double step,
                                  bool log_scale) {
  require(std::isfinite(from) && std::isfinite(to) && from >= 0 && from <= to, ErrorCode::kInput,
          "curve range must satisfy 0 <= from <= to");
  if (log_scale) {
    require(from > 0 && step > 1, ErrorCode::kInput, "log curves need from > 0 and factor > 1");
  } else {
    require(step > 0, ErrorCode::kInput, "curve step must be positive");
  }
  const CostReport r = cost_report(p);
  std::vector<CurveRow> rows;
  for (std::size_t i = 0;; ++i) {
    const double n = log_scale ? from * std::pow(step, double(i)) : from + step * double(i);
    if (n > to * (1 + 1e-12)) break;
    CurveRow row;
    row.n = n;
    row.costs = format_costs(r, n);
    row.argmin = cheapest(row.costs);
    rows.push_back(row);
  }
  return rows;
}

void write_curves_csv(std::ostream& out, const std::vector<CurveRow>& rows) {
  out << "n,implicit,explicit,external,argmin\n";
  const auto flags = out.flags();
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.n << ',' << r.costs.implicit << ',' << r.costs.explicit_ << ',' << r.costs.external
        << ',' << to_string(r.argmin) << '\n';
  }
  out.flags(flags);
}

}  // namespace em3
