#pragma once

#include <array>
#include <cstdint>

#include "ran/scene.hpp"

namespace ran {

inline constexpr std::array<double, 5> kAugmentScales{0.5, 0.75, 1.0, 1.25, 1.5};

struct AugmentParams {
  double scale = 1.0;
  bool mirror = false;
};

/// Uniform scale from kAugmentScales, horizontal mirror with probability 0.5.
AugmentParams draw_augment(std::uint64_t seed);

/// Rescales (bilinear image, nearest labels), optionally mirrors, then
/// centre-crops or pads back to the original size. Image padding reflects,
/// label padding is the ignore label.
Sample augment(const Sample& sample, const AugmentParams& params);
Sample augment(const Sample& sample, std::uint64_t seed);

}  // namespace ran
