#pragma once

#include <span>
#include <vector>

namespace em3 {

// Rotary position encoding over adjacent pairs (2i, 2i+1) with
// angle position * base^(-2i / d). v.size() must be even.
void rope_rotate(std::span<float> v, int position, float base = 10000.0f);

std::vector<float> rope_rotated(std::span<const float> v, int position, float base = 10000.0f);

}  // namespace em3
