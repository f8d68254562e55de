#include "ran/ablation.hpp"

#include <chrono>
#include <cstring>

#include "ran/netpbm.hpp"

namespace ran {

std::uint64_t parameter_hash(std::span<const Parameter> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : params) {
    feed(p.name.data(), p.name.size());
    feed(p.value.data.data(), sizeof(double) * static_cast<std::size_t>(p.value.size()));
  }
  return h;
}

AblationRun run_variant(const RanConfig& model_cfg, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& test_set, const TrainConfig& train_cfg,
                        std::span<const double> scales) {
  const auto start = std::chrono::steady_clock::now();
  RanModel model(model_cfg);
  AblationRun run;
  run.variant = model_cfg.variant;
  run.seed = model_cfg.seed;
  run.backbone_hash = parameter_hash(std::span(model.parameters()).first(model.backbone_parameter_count()));

  const TrainResult trained = train(model, train_set, train_cfg);
  run.initial_loss = trained.log.front().total;
  run.final_loss = trained.log.back().total;
  const std::array<double, 1> single{1.0};
  run.single_scale = evaluate(model, test_set, single);
  run.multi_scale = evaluate(model, test_set, scales);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

AblationResult ablate(const RanConfig& base, const std::vector<Sample>& train_set, const std::vector<Sample>& test_set,
                      const TrainConfig& train_cfg, std::span<const std::uint64_t> seeds,
                      std::span<const double> scales, const AblationProgress& progress) {
  if (seeds.empty()) throw ConfigError("ablate: no seeds given");
  AblationResult result;
  for (std::uint64_t seed : seeds) {
    for (Variant v : kAblationVariants) {
      RanConfig mc = base;
      mc.variant = v;
      mc.seed = seed;
      TrainConfig tc = train_cfg;
      tc.seed = seed;
      result.runs.push_back(run_variant(mc, train_set, test_set, tc, scales));
      if (progress) progress(result.runs.back());
    }
  }
  for (Variant v : kAblationVariants) {
    AblationRow row;
    row.variant = v;
    int count = 0;
    for (const auto& r : result.runs) {
      if (r.variant != v) continue;
      row.pixel_acc += r.single_scale.pixel_acc;
      row.mean_acc += r.single_scale.mean_acc;
      row.mean_iou += r.single_scale.mean_iou;
      row.mean_iou_msc += r.multi_scale.mean_iou;
      ++count;
    }
    row.pixel_acc /= count;
    row.mean_acc /= count;
    row.mean_iou /= count;
    row.mean_iou_msc /= count;
    result.rows.push_back(row);
  }
  return result;
}

std::string format_ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,pixel_acc,mean_acc,mean_iou,mean_iou_msc\n";
  for (const auto& r : rows) {
    out += std::string(variant_name(r.variant)) + ',' + format_number(r.pixel_acc) + ',' + format_number(r.mean_acc) +
           ',' + format_number(r.mean_iou) + ',' + format_number(r.mean_iou_msc) + '\n';
  }
  return out;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
  const std::string text = format_ablation_csv(rows);
  write_file({text.begin(), text.end()}, path);
}

}  // namespace ran
