#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "em3/cost_model.h"
#include "em3/error.h"
#include "oracles/reference_impls.h"

namespace em3 {
namespace {

oracle::HandCosts hand(const CostParams& p) {
  return oracle::hand_costs(p.n_layers, p.n_kv_heads, p.head_dim, p.hidden_dim, p.mlp_width,
                            p.n_vocab, p.n_mem_layers, p.ref_len, p.mem_tokens, p.chunk_len,
                            p.train_len);
}

void expect_rel(double got, double want, double tol) {
  EXPECT_NEAR(got / want, 1.0, tol) << got << " vs " << want;
}

TEST(CostModel, ReferenceGoldenValues) {
  const auto p = CostParams::reference();
  expect_rel(cost_write_implicit(p), 2.24, 0.01);
  expect_rel(cost_write_explicit(p), 0.308, 0.01);
  expect_rel(cost_read_explicit(p), 1.44e-4, 0.01);
  expect_rel(cost_read_external(p), 0.624, 0.01);
  EXPECT_DOUBLE_EQ(cost_read_explicit(p), 2.0 * 22 * 2 * 64 * 8 * 3200 / 1e12);
  const auto r = cost_report(p);
  ASSERT_TRUE(r.interval.has_value());
  expect_rel(r.interval->lo, 0.494, 0.02);
  expect_rel(r.interval->hi, 13400, 0.02);
}

TEST(CostModel, MatchesHandExpansion) {
  for (const auto& p : {CostParams::reference(), CostParams::from_config(ModelConfig::toy(), 256)}) {
    const auto h = hand(p);
    EXPECT_NEAR(cost_write_implicit(p) / h.write_implicit, 1.0, 1e-12);
    EXPECT_NEAR(cost_write_explicit(p) / h.write_explicit, 1.0, 1e-12);
    EXPECT_NEAR(cost_read_explicit(p) / h.read_explicit, 1.0, 1e-12);
    EXPECT_NEAR(cost_read_external(p) / h.read_external, 1.0, 1e-12);
  }
}

TEST(CostModel, TermStructure) {
  auto p = CostParams::reference();
  const auto base = write_implicit_terms(p);
  p.n_layers *= 2;
  const auto twice = write_implicit_terms(p);
  EXPECT_DOUBLE_EQ(twice.projections, 2 * base.projections);
  EXPECT_DOUBLE_EQ(twice.attention, 2 * base.attention);
  EXPECT_DOUBLE_EQ(twice.mlp, 2 * base.mlp);
  EXPECT_DOUBLE_EQ(twice.lm_head, base.lm_head);

  p = CostParams::reference();
  p.n_mem_layers = 1;
  EXPECT_EQ(write_explicit_terms(p).mlp, 0.0);
  p.n_layers = 1;
  EXPECT_EQ(read_external_terms(p).mlp, 0.0);

  p = CostParams::reference();
  p.mem_tokens = 0;
  EXPECT_EQ(cost_read_explicit(p), 0.0);

  p = CostParams::reference();
  const double read = cost_read_explicit(p);
  p.chunk_len *= 2;
  EXPECT_DOUBLE_EQ(cost_read_explicit(p), 2 * read);
}

TEST(CostModel, MonotoneInEveryShape) {
  double CostParams::*fields[] = {
      &CostParams::n_layers, &CostParams::n_heads,      &CostParams::n_kv_heads,
      &CostParams::head_dim, &CostParams::hidden_dim,   &CostParams::mlp_width,
      &CostParams::n_vocab,  &CostParams::n_mem_layers, &CostParams::ref_len,
      &CostParams::mem_tokens, &CostParams::chunk_len,  &CostParams::train_len};
  double (*costs[])(const CostParams&) = {cost_write_implicit, cost_write_explicit,
                                          cost_read_explicit, cost_read_external};
  for (auto f : fields) {
    auto lo = CostParams::reference();
    lo.n_mem_layers = 11;
    auto hi = lo;
    hi.*f *= 1.5;
    for (auto c : costs) EXPECT_GE(c(hi), c(lo));
  }
}

TEST(CostModel, Orderings) {
  const auto r = cost_report(CostParams::reference());
  EXPECT_GT(r.write_implicit, r.write_explicit);
  EXPECT_GT(r.write_explicit, r.write_external);
  EXPECT_LT(r.read_implicit, r.read_explicit);
  EXPECT_LT(r.read_explicit, r.read_external);
}

TEST(OptimalFormat, ExtremesAndInterval) {
  const auto p = CostParams::reference();
  EXPECT_EQ(optimal_format(p, 0).format, MemoryFormat::kExternal);
  EXPECT_EQ(optimal_format(p, 1e6).format, MemoryFormat::kImplicit);
  EXPECT_EQ(optimal_format(p, 100).format, MemoryFormat::kExplicit);
  EXPECT_THROW(optimal_format(p, -1), Error);
  const auto iv = *cost_report(p).interval;
  EXPECT_EQ(optimal_format(p, iv.lo * 0.99).format, MemoryFormat::kExternal);
  EXPECT_EQ(optimal_format(p, iv.lo * 1.01).format, MemoryFormat::kExplicit);
  EXPECT_EQ(optimal_format(p, iv.hi * 0.99).format, MemoryFormat::kExplicit);
  EXPECT_EQ(optimal_format(p, iv.hi * 1.01).format, MemoryFormat::kImplicit);
}

double bisect(const CostReport& r, double a, double b, MemoryFormat left) {
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (a + b);
    (cheapest(format_costs(r, m)) == left ? a : b) = m;
  }
  return 0.5 * (a + b);
}

TEST(OptimalFormat, ClosedFormMatchesNumericCrossings) {
  for (const auto& p : {CostParams::reference(), CostParams::from_config(ModelConfig::toy())}) {
    const auto r = cost_report(p);
    ASSERT_TRUE(r.interval.has_value());
    const auto iv = *r.interval;
    const double lo = bisect(r, 0.0, std::sqrt(iv.lo * iv.hi), MemoryFormat::kExternal);
    const double hi = bisect(r, std::sqrt(iv.lo * iv.hi), 1e9, MemoryFormat::kExplicit);
    EXPECT_NEAR(lo / iv.lo, 1.0, 1e-6);
    EXPECT_NEAR(hi / iv.hi, 1.0, 1e-6);
    EXPECT_NEAR(iv.lo, r.write_explicit / (r.read_external - r.read_explicit), 1e-12 * iv.lo);
    EXPECT_NEAR(iv.hi, (r.write_implicit - r.write_explicit) / r.read_explicit, 1e-9 * iv.hi);
  }
}

TEST(OptimalFormat, NoIntervalWhenExplicitNeverWins) {
  CostReport r;
  r.write_implicit = 1.0;
  r.write_explicit = 2.0;
  r.read_explicit = 0.5;
  r.read_external = 1.0;
  EXPECT_FALSE(advantage_interval(r).has_value());
  r.read_external = 0.25;
  EXPECT_FALSE(advantage_interval(r).has_value());
}

TEST(Curves, TwoTransitionsAndConsistentRows) {
  const auto p = CostParams::reference();
  const auto rows = emit_curves(p, 0.01, 1e5, 1.01, true);
  int transitions = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) transitions += rows[i].argmin != rows[i - 1].argmin;
  EXPECT_EQ(transitions, 2);
  EXPECT_EQ(rows.front().argmin, MemoryFormat::kExternal);
  EXPECT_EQ(rows.back().argmin, MemoryFormat::kImplicit);
  const auto iv = *cost_report(p).interval;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].argmin != rows[i - 1].argmin) {
      const double at = rows[i].argmin == MemoryFormat::kExplicit ? iv.lo : iv.hi;
      EXPECT_LE(rows[i - 1].n, at);
      EXPECT_GE(rows[i].n, at);
    }
  }
  for (std::size_t i = 0; i < rows.size(); i += 97) {
    const auto& row = rows[i];
    EXPECT_DOUBLE_EQ(row.costs.implicit, cost_write_implicit(p));
    EXPECT_DOUBLE_EQ(row.costs.explicit_, cost_write_explicit(p) + row.n * cost_read_explicit(p));
    EXPECT_DOUBLE_EQ(row.costs.external, row.n * cost_read_external(p));
    EXPECT_EQ(row.argmin, optimal_format(p, row.n).format);
  }
}

TEST(Curves, LinearRangeAndCsv) {
  const auto rows = emit_curves(CostParams::reference(), 0, 10, 2.5);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[4].n, 10.0);
  std::ostringstream out;
  write_curves_csv(out, rows);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "n,implicit,explicit,external,argmin");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 2), "0,");
  EXPECT_NE(line.find("external"), std::string::npos);
  EXPECT_THROW(emit_curves(CostParams::reference(), 5, 1, 1), Error);
  EXPECT_THROW(emit_curves(CostParams::reference(), 0, 1, 0), Error);
  EXPECT_THROW(emit_curves(CostParams::reference(), 0, 10, 2, true), Error);
}

TEST(CostParams, Validation) {
  auto p = CostParams::reference();
  p.n_mem_layers = 45;
  EXPECT_THROW(p.validate(), Error);
  p = CostParams::reference();
  p.hidden_dim = 0;
  EXPECT_THROW(cost_report(p), Error);
  p = CostParams::reference();
  p.mem_tokens = 0;
  EXPECT_NO_THROW(p.validate());
  const auto t = CostParams::from_config(ModelConfig::toy());
  EXPECT_EQ(t.n_layers, 8);
  EXPECT_EQ(t.chunk_len, 16);
}

}  // namespace
}  // namespace em3
