#include <algorithm>

#include "em3/error.h"
#include "em3/retrieval.h"

namespace em3 {
namespace {

int lcs(std::span<const Token> a, std::span<const Token> b, std::vector<int>& prev,
        std::vector<int>& cur) {
  std::fill(prev.begin(), prev.end(), 0);
  for (Token x : a) {
    cur[0] = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = x == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double overlap(std::span<const Token> t, std::span<const Token> r) {
  require(!r.empty(), ErrorCode::kInput, "overlap needs a non-empty reference");
  // Matches may span indices i_1..i_N with i_N - i_1 <= 2|r|: 2|r| + 1 positions.
  const std::size_t window = 2 * r.size() + 1;
  std::vector<int> prev(r.size() + 1), cur(r.size() + 1);
  int best = 0;
  if (t.size() <= window) {
    best = lcs(t, r, prev, cur);
  } else {
    for (std::size_t s = 0; s + window <= t.size(); ++s) {
      best = std::max(best, lcs(t.subspan(s, window), r, prev, cur));
      if (best == static_cast<int>(r.size())) break;
    }
  }
  return static_cast<double>(best) / static_cast<double>(r.size());
}

std::vector<SearchHit> filter_leakage(std::span<const SearchHit> candidates,
                                      std::span<const Token> probe, double threshold,
                                      const RetrievalIndex& index) {
  require(threshold > 0.0 && threshold <= 1.0, ErrorCode::kInput,
          "leakage threshold must lie in (0, 1]");
  std::vector<SearchHit> kept;
  kept.reserve(candidates.size());
  for (const auto& c : candidates) {
    const auto& ref = index.tokens(c.id);
    if (!ref.empty() && overlap(probe, ref) >= threshold) continue;
    kept.push_back(c);
  }
  return kept;
}

}  // namespace em3
