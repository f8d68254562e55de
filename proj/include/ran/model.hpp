#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ran/ops.hpp"

namespace ran {

enum class Variant { baseline, dual_branch, ran_s, ran_n };

std::string_view variant_name(Variant v);
/// Accepts the canonical names and the CLI spellings ("dual", "ran-s", "ran-n").
Variant parse_variant(std::string_view name);

struct LossWeights {
  double original = 1.0;
  double reverse = 1.0;
  double combined = 1.0;
};

struct RanConfig {
  Variant variant = Variant::ran_s;
  int num_classes = 5;
  std::vector<int> backbone_channels{16, 32, 64, 64};
  int decision_kernel = 3;
  int decision_dilation = 1;
  LossWeights loss_weights;
  bool stop_grad_attention = false;
  std::uint64_t seed = 0;

  /// Throws ConfigError on invalid values. Baseline gets its reverse and
  /// combined weights forced to zero.
  RanConfig resolved() const;
  bool has_reverse_branch() const { return variant != Variant::baseline; }
};

/// Total spatial reduction of the backbone.
inline constexpr Index kDownsample = 4;
inline constexpr double kNormalizedShift = 0.125;
inline constexpr double kNormalizedOffset = -4.0;

struct Parameter {
  std::string name;
  Tensor value;
  bool decays = true;  // weight decay applies to conv weights only
};

/// Forward-pass logit maps of one batch, materialised out of a graph.
/// For the baseline, reverse and attention are empty tensors.
struct BranchOutputs {
  Tensor original;
  Tensor reverse;
  Tensor attention;
  Tensor combined;
};

/// The same maps as graph variables.
struct BranchVars {
  Var original;
  Var reverse;
  Var attention;
  Var combined;

  BranchOutputs materialize() const;
};

struct BranchOptions {
  /// Replaces the computed attention mask with a constant (tests, frozen-mask objectives).
  std::optional<Tensor> attention_override;
};

struct LossTerms {
  Var total;
  Var original;  // unweighted cross-entropy terms; reverse/combined unset for the baseline
  Var reverse;
  Var combined;
};

/// Backbone (conv-relu-pool x2, conv-relu x2) followed by the decision heads.
class RanModel {
 public:
  explicit RanModel(const RanConfig& config);
  RanModel(const RanConfig& config, std::vector<Parameter> parameters);

  const RanConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const Parameter& parameter(std::string_view name) const;

  /// Number of backbone parameter tensors (weights and biases), which come first.
  std::size_t backbone_parameter_count() const { return 2 * config_.backbone_channels.size(); }

 private:
  RanConfig config_;
  std::vector<Parameter> params_;
};

/// Model parameters bound into a graph, in registration order.
struct BoundModel {
  const RanModel* model = nullptr;
  std::vector<Var> params;

  const RanConfig& config() const { return model->config(); }
};

BoundModel bind(Graph& graph, const RanModel& model, bool trainable);

Var forward_features(const BoundModel& bound, const Var& image);

/// I_ra = sigmoid(-F_org).
Var reverse_attention_simple(const Var& original);
/// Pre-sigmoid value 1 / (relu(F_org) + 0.125) - 4, which lies in (-4, 4].
Var normalized_attention_logit(const Var& original);
/// I_ra = sigmoid(1 / (relu(F_org) + 0.125) - 4).
Var reverse_attention_normalized(const Var& original);

/// F_combined = F_org - I_ra * F_rev.
Var fuse(const Var& original, const Var& reverse, const Var& attention);

BranchVars forward_branches(const BoundModel& bound, const Var& features, const BranchOptions& options = {});

/// Runs backbone and heads on an (N,3,H,W) image batch.
BranchVars forward(const BoundModel& bound, const Var& image, const BranchOptions& options = {});

/// w_org CE(F_org) + w_rev CE(NEG(F_rev)) + w_comb CE(F_combined). Labels at a
/// different resolution are nearest-resized to the logit grid first.
LossTerms total_loss(const BranchVars& outputs, const LabelMap& labels, const RanConfig& config);

/// Reference per-class reversed ground truth: 0 on class c, 1 elsewhere, ignore kept.
LabelMap reverse_ground_truth(const LabelMap& labels, int c, int num_classes);

/// Per-pixel argmax over channels; ties go to the lowest class index.
LabelMap predict(const Tensor& logits);

/// Convenience inference: combined logits for an image batch.
Tensor infer_logits(const RanModel& model, const Tensor& image);

}  // namespace ran
