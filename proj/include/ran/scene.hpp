#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>

#include "ran/tensor.hpp"

namespace ran {

/// Procedural scene parameters. Class 0 is background. When there are at
/// least two foreground classes, the last two form a confusable pair whose
/// appearance is blended by texture_overlap (0 = disjoint, 1 = identical);
/// they then differ only by shape (rectangles vs ellipses).
struct SceneConfig {
  int num_classes = 5;
  Index height = 32;
  Index width = 32;
  int min_shapes = 1;
  int max_shapes = 4;
  double texture_overlap = 0.75;
  double noise_std = 0.03;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sample {
  Tensor image;     // (1,3,H,W), values in [0,1]
  LabelMap labels;  // (1,H,W)
};

/// The confusable class pair, if the class count admits one.
std::optional<std::pair<int, int>> confusable_pair(int num_classes);

struct ClassAppearance {
  std::array<double, 3> color;
  double frequency;
  double angle;
  double amplitude;
  bool ellipse;
};

/// Texture parameters of class c after confusable-pair blending.
ClassAppearance class_appearance(const SceneConfig& cfg, int c);

/// Half-width of the per-channel value range a class can produce before noise.
double texture_half_range(const SceneConfig& cfg, int c);

/// Deterministic in (cfg.seed, index).
Sample generate_scene(const SceneConfig& cfg, std::uint64_t index);

}  // namespace ran
