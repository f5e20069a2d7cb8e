#include "em3/rope.h"

#include <cmath>

#include "em3/error.h"

namespace em3 {

void rope_rotate(std::span<float> v, int position, float base) {
  require(v.size() % 2 == 0, ErrorCode::kShape, "rope_rotate needs an even dimension");
  require(position >= 0, ErrorCode::kInput, "rope_rotate needs a non-negative position");
  if (position == 0) return;
  const double d = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); i += 2) {
    const double theta = std::pow(static_cast<double>(base), -static_cast<double>(i) / d);
    const double angle = static_cast<double>(position) * theta;
    const float c = static_cast<float>(std::cos(angle));
    const float s = static_cast<float>(std::sin(angle));
    const float x0 = v[i];
    const float x1 = v[i + 1];
    v[i] = x0 * c - x1 * s;
    v[i + 1] = x0 * s + x1 * c;
  }
}

std::vector<float> rope_rotated(std::span<const float> v, int position, float base) {
  std::vector<float> out(v.begin(), v.end());
  rope_rotate(out, position, base);
  return out;
}

}  // namespace em3
