#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ran/gradcheck.hpp"

namespace ran {

inline constexpr double kGradientTolerance = 1e-4;
inline constexpr double kGradientEps = 1e-5;

struct GradientCase {
  std::string name;
  GradCheckReport report;

  bool passed() const { return report.max_rel_error < kGradientTolerance; }
};

/// Finite-difference check of every differentiable op and of the full
/// training objective for all four variants with and without the attention
/// stop-gradient. Uses a reduced backbone so every parameter can be probed.
/// Inputs are drawn from [-2, 2] and kept at least 10 eps away from relu and
/// max-pool kinks.
std::vector<GradientCase> run_gradient_suite(std::uint64_t seed = 0, double eps = kGradientEps);

}  // namespace ran
