#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ran/metrics.hpp"
#include "ran/model.hpp"
#include "ran/optim.hpp"
#include "ran/scene.hpp"

namespace ran {

inline constexpr std::array<double, 5> kDefaultMscScales{0.5, 0.75, 1.0, 1.25, 1.5};

struct LogRow {
  std::int64_t iter = 0;
  double lr = 0.0;
  double loss_org = 0.0;
  double loss_rev = 0.0;  // 0 for the baseline, which has no reverse branch
  double loss_comb = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<LogRow> log;
  std::vector<ArrayXd> momentum;  // per parameter, registration order
};

using ProgressFn = std::function<void(const LogRow&)>;

/// Runs cfg.max_iter SGD iterations on `model` in place. Batches are drawn from
/// a seeded shuffle of the dataset, optionally augmented. Bit-deterministic for
/// a given (model init, dataset, cfg).
TrainResult train(RanModel& model, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                  const ProgressFn& progress = {});

/// CSV with header "iter,lr,loss_org,loss_rev,loss_comb,total", 6 significant digits.
std::string format_train_log(const std::vector<LogRow>& log);
void write_train_log(const std::vector<LogRow>& log, const std::filesystem::path& path);

/// "%.6g" formatting used by every CSV the tools emit.
std::string format_number(double v);

/// Input extent used for scale s: extent * s rounded to a positive multiple of 4.
Index msc_extent(Index extent, double scale);

/// Combined logits at the single-scale logit resolution, fused by elementwise
/// max over the given input scales.
Tensor msc_predict(const RanModel& model, const Tensor& image, std::span<const double> scales);

/// Labels at image resolution from logits at logit resolution (nearest upsampling).
LabelMap predict_at(const Tensor& logits, Index height, Index width);

ConfusionMatrix evaluate_confusion(const RanModel& model, const std::vector<Sample>& dataset,
                                   std::span<const double> scales);
Metrics evaluate(const RanModel& model, const std::vector<Sample>& dataset, std::span<const double> scales);

/// Stacks the selected samples into one batch.
Tensor stack_images(const std::vector<Sample>& samples, std::span<const std::size_t> indices);
LabelMap stack_labels(const std::vector<Sample>& samples, std::span<const std::size_t> indices);

}  // namespace ran
