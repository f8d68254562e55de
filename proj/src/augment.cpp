#include "ran/augment.hpp"

#include <cmath>
#include <random>

#include "ran/kernels.hpp"

namespace ran {
namespace {

// Mirror-reflect i into [0, n) without repeating the edge sample.
Index reflect(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

AugmentParams draw_augment(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AugmentParams p;
  p.scale = kAugmentScales[std::uniform_int_distribution<std::size_t>(0, kAugmentScales.size() - 1)(rng)];
  p.mirror = std::bernoulli_distribution(0.5)(rng);
  return p;
}

Sample augment(const Sample& sample, const AugmentParams& params) {
  const Index H = sample.image.shape.h, W = sample.image.shape.w;
  const Index sh = std::max<Index>(1, std::lround(static_cast<double>(H) * params.scale));
  const Index sw = std::max<Index>(1, std::lround(static_cast<double>(W) * params.scale));
  const Tensor scaled = kernels::resize_bilinear(sample.image, sh, sw);
  const LabelMap scaled_labels = kernels::resize_labels_nearest(sample.labels, sh, sw);

  // Content offset of the output origin inside the scaled frame: positive
  // crops, negative pads.
  const Index oy = (sh - H) / 2;
  const Index ox = (sw - W) / 2;

  Sample out{Tensor({1, 3, H, W}), LabelMap(1, H, W, kIgnoreLabel)};
  for (Index y = 0; y < H; ++y) {
    const Index sy = y + oy;
    const bool row_inside = sy >= 0 && sy < sh;
    for (Index x = 0; x < W; ++x) {
      const Index mx = x + ox;
      const bool inside = row_inside && mx >= 0 && mx < sw;
      const Index src_x_raw = reflect(mx, sw);
      const Index src_x = params.mirror ? sw - 1 - src_x_raw : src_x_raw;
      const Index src_y = reflect(sy, sh);
      for (Index c = 0; c < 3; ++c) out.image(0, c, y, x) = scaled(0, c, src_y, src_x);
      if (inside) out.labels(0, y, x) = scaled_labels(0, src_y, src_x);
    }
  }
  return out;
}

Sample augment(const Sample& sample, std::uint64_t seed) { return augment(sample, draw_augment(seed)); }

}  // namespace ran
