#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ran/train.hpp"

namespace ran {

inline constexpr std::array<Variant, 4> kAblationVariants{Variant::baseline, Variant::dual_branch, Variant::ran_s,
                                                          Variant::ran_n};

struct AblationRun {
  Variant variant = Variant::baseline;
  std::uint64_t seed = 0;
  Metrics single_scale;
  Metrics multi_scale;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::uint64_t backbone_hash = 0;  // hash of the backbone init, identical across variants
  double seconds = 0.0;
};

struct AblationRow {
  Variant variant = Variant::baseline;
  double pixel_acc = 0.0;
  double mean_acc = 0.0;
  double mean_iou = 0.0;
  double mean_iou_msc = 0.0;
};

struct AblationResult {
  std::vector<AblationRun> runs;
  std::vector<AblationRow> rows;  // per variant, single-scale and MSC metrics averaged over seeds
};

/// FNV-1a over the raw bytes of the given parameters.
std::uint64_t parameter_hash(std::span<const Parameter> params);

/// Trains and evaluates a single configuration.
AblationRun run_variant(const RanConfig& model_cfg, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& test_set, const TrainConfig& train_cfg,
                        std::span<const double> scales);

using AblationProgress = std::function<void(const AblationRun&)>;

/// For every seed, trains all four variants from the same seeded initialisation
/// of the shared layers and evaluates them single-scale and with MSC.
AblationResult ablate(const RanConfig& base, const std::vector<Sample>& train_set, const std::vector<Sample>& test_set,
                      const TrainConfig& train_cfg, std::span<const std::uint64_t> seeds,
                      std::span<const double> scales, const AblationProgress& progress = {});

/// Header "variant,pixel_acc,mean_acc,mean_iou,mean_iou_msc".
std::string format_ablation_csv(const std::vector<AblationRow>& rows);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path);

}  // namespace ran
