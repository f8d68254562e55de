#include "ran/model.hpp"

#include <cmath>
#include <random>

namespace ran {
namespace {

Tensor gaussian_weight(Shape shape, std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::mt19937_64 rng(seq);
  const double fan_in = static_cast<double>(shape.c * shape.h * shape.w);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Tensor t(shape);
  for (Index i = 0; i < t.size(); ++i) t.data[i] = dist(rng);
  return t;
}

// Stream ids are fixed per layer so shared layers initialise identically across variants.
constexpr std::uint64_t kOriginalStream = 100;
constexpr std::uint64_t kReverseStream = 101;

ConvGeometry head_geometry(const RanConfig& cfg) {
  return {1, cfg.decision_dilation * (cfg.decision_kernel - 1) / 2, cfg.decision_dilation};
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::dual_branch: return "dual_branch";
    case Variant::ran_s: return "ran_s";
    case Variant::ran_n: return "ran_n";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "baseline") return Variant::baseline;
  if (name == "dual" || name == "dual_branch" || name == "dual-branch") return Variant::dual_branch;
  if (name == "ran-s" || name == "ran_s") return Variant::ran_s;
  if (name == "ran-n" || name == "ran_n") return Variant::ran_n;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

RanConfig RanConfig::resolved() const {
  if (num_classes < 2 || num_classes > 255) throw ConfigError("num_classes must be in [2, 255]");
  if (backbone_channels.size() < 2) throw ConfigError("backbone needs at least two conv layers");
  for (int c : backbone_channels)
    if (c < 1) throw ConfigError("channel counts must be positive");
  if (decision_kernel < 1 || decision_kernel % 2 == 0) throw ConfigError("decision_kernel must be odd and positive");
  if (decision_dilation < 1) throw ConfigError("decision_dilation must be positive");
  const auto& w = loss_weights;
  if (w.original <= 0 || w.reverse < 0 || w.combined < 0) throw ConfigError("loss weights must be >= 0, original > 0");
  RanConfig out = *this;
  if (variant == Variant::baseline) {
    out.loss_weights.reverse = 0.0;
    out.loss_weights.combined = 0.0;
  }
  return out;
}

RanModel::RanModel(const RanConfig& config) : config_(config.resolved()) {
  int in = 3;
  for (std::size_t i = 0; i < config_.backbone_channels.size(); ++i) {
    const int out = config_.backbone_channels[i];
    const std::string prefix = "backbone." + std::to_string(i);
    params_.push_back({prefix + ".weight", gaussian_weight({out, in, 3, 3}, config_.seed, i), true});
    params_.push_back({prefix + ".bias", Tensor::zeros({out, 1, 1, 1}), false});
    in = out;
  }
  const Index k = config_.decision_kernel;
  const Index classes = config_.num_classes;
  params_.push_back({"org.weight", gaussian_weight({classes, in, k, k}, config_.seed, kOriginalStream), true});
  params_.push_back({"org.bias", Tensor::zeros({classes, 1, 1, 1}), false});
  if (config_.has_reverse_branch()) {
    params_.push_back({"rev.weight", gaussian_weight({classes, in, k, k}, config_.seed, kReverseStream), true});
    params_.push_back({"rev.bias", Tensor::zeros({classes, 1, 1, 1}), false});
  }
}

RanModel::RanModel(const RanConfig& config, std::vector<Parameter> parameters) : RanModel(config) {
  if (parameters.size() != params_.size()) throw ConfigError("parameter count does not match configuration");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (parameters[i].name != params_[i].name) throw ConfigError("unexpected parameter '" + parameters[i].name + "'");
    if (!(parameters[i].value.shape == params_[i].value.shape))
      throw ShapeError("parameter '" + parameters[i].name + "' has the wrong shape");
    params_[i].value = std::move(parameters[i].value);
  }
}

const Parameter& RanModel::parameter(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

BoundModel bind(Graph& graph, const RanModel& model, bool trainable) {
  BoundModel bound{&model, {}};
  bound.params.reserve(model.parameters().size());
  for (const auto& p : model.parameters())
    bound.params.push_back(trainable ? graph.parameter(p.value) : graph.constant(p.value));
  return bound;
}

Var forward_features(const BoundModel& bound, const Var& image) {
  const Shape& s = image.shape();
  if (s.c != 3) throw ShapeError("forward_features: expected a 3-channel image");
  if (s.h % kDownsample != 0 || s.w % kDownsample != 0 || s.h == 0 || s.w == 0)
    throw GeometryError("forward_features: image size must be a positive multiple of 4");
  Var x = image;
  const std::size_t layers = bound.config().backbone_channels.size();
  for (std::size_t i = 0; i < layers; ++i) {
    x = relu(conv2d(x, bound.params[2 * i], bound.params[2 * i + 1], {1, 1, 1}));
    if (i < 2) x = max_pool2d(x, 2, 2);
  }
  return x;
}

Var reverse_attention_simple(const Var& original) { return sigmoid(neg(original)); }

Var normalized_attention_logit(const Var& original) {
  const Var reciprocal = power_transform(relu(original), 1.0, kNormalizedShift, -1.0);
  return power_transform(reciprocal, 1.0, kNormalizedOffset, 1.0);
}

Var reverse_attention_normalized(const Var& original) { return sigmoid(normalized_attention_logit(original)); }

Var fuse(const Var& original, const Var& reverse, const Var& attention) {
  return original - attention * reverse;
}

BranchOutputs BranchVars::materialize() const {
  BranchOutputs out;
  out.original = original.value();
  if (reverse.valid()) out.reverse = reverse.value();
  if (attention.valid()) out.attention = attention.value();
  out.combined = combined.value();
  return out;
}

BranchVars forward_branches(const BoundModel& bound, const Var& features, const BranchOptions& options) {
  const RanConfig& cfg = bound.config();
  const std::size_t head = bound.model->backbone_parameter_count();
  const ConvGeometry geometry = head_geometry(cfg);

  BranchVars out;
  out.original = conv2d(features, bound.params[head], bound.params[head + 1], geometry);
  if (cfg.variant == Variant::baseline) {
    out.combined = out.original;
    return out;
  }
  out.reverse = conv2d(features, bound.params[head + 2], bound.params[head + 3], geometry);

  Graph& g = features.graph();
  if (options.attention_override) {
    require_same_shape(options.attention_override->shape, out.original.shape(), "attention override");
    out.attention = g.constant(*options.attention_override);
  } else {
    const Var source = cfg.stop_grad_attention ? detach(out.original) : out.original;
    switch (cfg.variant) {
      case Variant::dual_branch:
        out.attention = g.constant(Tensor::constant(out.original.shape(), 1.0));
        break;
      case Variant::ran_s:
        out.attention = reverse_attention_simple(source);
        break;
      case Variant::ran_n:
        out.attention = reverse_attention_normalized(source);
        break;
      case Variant::baseline:
        break;
    }
  }
  out.combined = fuse(out.original, out.reverse, out.attention);
  return out;
}

BranchVars forward(const BoundModel& bound, const Var& image, const BranchOptions& options) {
  return forward_branches(bound, forward_features(bound, image), options);
}

LossTerms total_loss(const BranchVars& outputs, const LabelMap& labels, const RanConfig& config) {
  const RanConfig cfg = config.resolved();
  const Shape& s = outputs.original.shape();
  const LabelMap target = kernels::resize_labels_nearest(labels, s.h, s.w);

  LossTerms terms;
  terms.original = softmax_cross_entropy(outputs.original, target);
  terms.total = scale(terms.original, cfg.loss_weights.original);
  if (outputs.reverse.valid()) {
    terms.reverse = softmax_cross_entropy(neg(outputs.reverse), target);
    terms.combined = softmax_cross_entropy(outputs.combined, target);
    if (cfg.loss_weights.reverse > 0) terms.total = terms.total + scale(terms.reverse, cfg.loss_weights.reverse);
    if (cfg.loss_weights.combined > 0) terms.total = terms.total + scale(terms.combined, cfg.loss_weights.combined);
  }
  return terms;
}

LabelMap reverse_ground_truth(const LabelMap& labels, int c, int num_classes) {
  if (c < 0 || c >= num_classes) throw ClassError("reverse_ground_truth: class out of range");
  LabelMap out = labels;
  for (auto& l : out.data) {
    if (l == kIgnoreLabel) continue;
    if (l >= num_classes) throw ClassError("reverse_ground_truth: label out of range");
    l = (l == c) ? 0 : 1;
  }
  return out;
}

LabelMap predict(const Tensor& logits) {
  const Shape& s = logits.shape;
  LabelMap out(s.n, s.h, s.w);
  const Index plane = s.plane();
  for (Index n = 0; n < s.n; ++n) {
    const double* in = logits.plane(n, 0);
    for (Index p = 0; p < plane; ++p) {
      Index best = 0;
      for (Index c = 1; c < s.c; ++c)
        if (in[c * plane + p] > in[best * plane + p]) best = c;
      out.data[static_cast<std::size_t>(n * plane + p)] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

Tensor infer_logits(const RanModel& model, const Tensor& image) {
  Graph g;
  const BoundModel bound = bind(g, model, false);
  return forward(bound, g.constant(image)).combined.value();
}

}  // namespace ran
