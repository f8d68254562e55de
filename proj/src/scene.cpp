#include "ran/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace ran {
namespace {

constexpr double kShapeJitter = 0.04;

// Fixed palette for the default corpus; further classes walk the hue circle.
std::array<double, 3> palette(int c) {
  static constexpr std::array<std::array<double, 3>, 5> base{{
      {0.50, 0.50, 0.50},
      {0.90, 0.30, 0.20},
      {0.30, 0.85, 0.30},
      {0.20, 0.50, 0.80},
      {0.70, 0.15, 0.35},
  }};
  if (c < static_cast<int>(base.size())) return base[static_cast<std::size_t>(c)];
  const double hue = std::fmod(0.618033988749895 * c, 1.0) * 6.0;
  const double s = 0.6, v = 0.8;
  const int sector = static_cast<int>(hue) % 6;
  const double f = hue - std::floor(hue);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

ClassAppearance raw_appearance(int c) {
  ClassAppearance a;
  a.color = palette(c);
  a.frequency = 0.6 + 0.35 * (c % 4);
  a.angle = std::numbers::pi * (c % 6) / 6.0;
  a.amplitude = c == 0 ? 0.05 : 0.08;
  a.ellipse = c % 2 == 0;
  return a;
}

struct Region {
  int cls;
  Index top, left, height, width;
  double phase;
  double jitter;
};

bool inside(const Region& r, bool ellipse, Index y, Index x) {
  if (y < r.top || y >= r.top + r.height || x < r.left || x >= r.left + r.width) return false;
  if (!ellipse) return true;
  const double ry = r.height / 2.0, rx = r.width / 2.0;
  const double dy = (y + 0.5 - r.top - ry) / ry;
  const double dx = (x + 0.5 - r.left - rx) / rx;
  return dx * dx + dy * dy <= 1.0;
}

}  // namespace

void SceneConfig::validate() const {
  if (num_classes < 2 || num_classes > 255) throw ConfigError("scene: num_classes must be in [2, 255]");
  if (height < 16 || width < 16) throw ConfigError("scene: image must be at least 16x16");
  if (min_shapes < 0 || max_shapes < min_shapes) throw ConfigError("scene: invalid shapes_per_image range");
  if (!(texture_overlap >= 0.0 && texture_overlap <= 1.0)) throw ConfigError("scene: texture_overlap must be in [0,1]");
  if (!(noise_std >= 0.0)) throw ConfigError("scene: noise_std must be non-negative");
}

std::optional<std::pair<int, int>> confusable_pair(int num_classes) {
  if (num_classes < 3) return std::nullopt;
  return std::pair{num_classes - 2, num_classes - 1};
}

ClassAppearance class_appearance(const SceneConfig& cfg, int c) {
  ClassAppearance a = raw_appearance(c);
  const auto pair = confusable_pair(cfg.num_classes);
  if (pair && c == pair->second) {
    const ClassAppearance partner = raw_appearance(pair->first);
    const double t = cfg.texture_overlap;
    for (std::size_t ch = 0; ch < 3; ++ch) a.color[ch] = (1 - t) * a.color[ch] + t * partner.color[ch];
    a.frequency = (1 - t) * a.frequency + t * partner.frequency;
    a.angle = (1 - t) * a.angle + t * partner.angle;
    a.amplitude = (1 - t) * a.amplitude + t * partner.amplitude;
  }
  return a;
}

double texture_half_range(const SceneConfig& cfg, int c) {
  return class_appearance(cfg, c).amplitude + (c == 0 ? 0.0 : kShapeJitter);
}

Sample generate_scene(const SceneConfig& cfg, std::uint64_t index) {
  cfg.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  const Index H = cfg.height, W = cfg.width;
  auto uniform_int = [&rng](Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); };
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  std::vector<Region> regions;
  const auto pair = confusable_pair(cfg.num_classes);
  const int budget = static_cast<int>(uniform_int(cfg.min_shapes, cfg.max_shapes));
  for (int placed = 0; placed < budget;) {
    const int cls = static_cast<int>(uniform_int(1, cfg.num_classes - 1));
    Region r{cls, 0, 0, uniform_int(H / 5, H / 2), uniform_int(W / 5, W / 2), uniform(0, 2 * std::numbers::pi),
             uniform(-kShapeJitter, kShapeJitter)};
    r.top = uniform_int(0, H - r.height);
    r.left = uniform_int(0, W - r.width);
    regions.push_back(r);
    ++placed;

    // Put the confusable partner right next to this shape so the pair shares a boundary.
    if (pair && (cls == pair->first || cls == pair->second) && placed < budget) {
      Region p = r;
      p.cls = cls == pair->first ? pair->second : pair->first;
      p.phase = uniform(0, 2 * std::numbers::pi);
      p.jitter = uniform(-kShapeJitter, kShapeJitter);
      p.width = uniform_int(W / 5, W / 2);
      if (r.left + r.width + p.width <= W) {
        p.left = r.left + r.width;
      } else if (r.left - p.width >= 0) {
        p.left = r.left - p.width;
      } else {
        p.left = std::clamp<Index>(r.left, 0, W - p.width);
        p.top = r.top + r.height <= H - p.height ? r.top + r.height : std::max<Index>(0, r.top - p.height);
      }
      regions.push_back(p);
      ++placed;
    }
  }

  Sample s{Tensor({1, 3, H, W}), LabelMap(1, H, W, 0)};
  std::vector<int> owner(static_cast<std::size_t>(H * W), -1);
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const bool ellipse = class_appearance(cfg, regions[i].cls).ellipse;
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x)
        if (inside(regions[i], ellipse, y, x)) owner[static_cast<std::size_t>(y * W + x)] = static_cast<int>(i);
  }

  const ClassAppearance background = class_appearance(cfg, 0);
  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  for (Index y = 0; y < H; ++y) {
    for (Index x = 0; x < W; ++x) {
      const int o = owner[static_cast<std::size_t>(y * W + x)];
      const ClassAppearance a = o < 0 ? background : class_appearance(cfg, regions[static_cast<std::size_t>(o)].cls);
      const double phase = o < 0 ? 0.0 : regions[static_cast<std::size_t>(o)].phase;
      const double jitter = o < 0 ? 0.0 : regions[static_cast<std::size_t>(o)].jitter;
      const double wave =
          a.amplitude * std::sin(a.frequency * (x * std::cos(a.angle) + y * std::sin(a.angle)) + phase);
      s.labels(0, y, x) = static_cast<std::uint8_t>(o < 0 ? 0 : regions[static_cast<std::size_t>(o)].cls);
      for (Index ch = 0; ch < 3; ++ch) {
        const double n = cfg.noise_std > 0 ? noise(rng) : 0.0;
        s.image(0, ch, y, x) = std::clamp(a.color[static_cast<std::size_t>(ch)] + wave + jitter + n, 0.0, 1.0);
      }
    }
  }
  return s;
}

}  // namespace ran
