#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "ran/checkpoint.hpp"
#include "ran/model.hpp"
#include "ran/netpbm.hpp"

namespace ran {
namespace {

using testing::random_tensor;

RanConfig small_config(Variant v, std::uint64_t seed = 0) {
  RanConfig cfg;
  cfg.variant = v;
  cfg.num_classes = 4;
  cfg.backbone_channels = {4, 6, 6, 8};
  cfg.seed = seed;
  return cfg;
}

double attention_at(Var (*fn)(const Var&), double x) {
  Graph g;
  return fn(g.constant(Tensor({1, 1, 1, 1}, {x}))).value().data[0];
}

double normalized_logit_at(double x) { return attention_at(normalized_attention_logit, x); }

TEST(Config, Validation) {
  RanConfig cfg;
  cfg.num_classes = 1;
  EXPECT_THROW(RanModel{cfg}, ConfigError);
  cfg = {};
  cfg.loss_weights.original = 0.0;
  EXPECT_THROW(RanModel{cfg}, ConfigError);
  cfg = {};
  cfg.backbone_channels = {4, 0};
  EXPECT_THROW(RanModel{cfg}, ConfigError);
  cfg = {};
  cfg.decision_kernel = 2;
  EXPECT_THROW(RanModel{cfg}, ConfigError);
  cfg = {};
  cfg.variant = Variant::baseline;
  const RanConfig r = cfg.resolved();
  EXPECT_EQ(r.loss_weights.reverse, 0.0);
  EXPECT_EQ(r.loss_weights.combined, 0.0);
}

TEST(Config, VariantNames) {
  EXPECT_EQ(parse_variant("baseline"), Variant::baseline);
  EXPECT_EQ(parse_variant("dual"), Variant::dual_branch);
  EXPECT_EQ(parse_variant("ran-s"), Variant::ran_s);
  EXPECT_EQ(parse_variant("ran-n"), Variant::ran_n);
  for (Variant v : {Variant::baseline, Variant::dual_branch, Variant::ran_s, Variant::ran_n})
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_THROW(parse_variant("ran-x"), ConfigError);
}

TEST(Model, ParameterLayout) {
  const RanModel baseline(small_config(Variant::baseline));
  const RanModel ran(small_config(Variant::ran_s));
  EXPECT_EQ(baseline.parameters().size(), 10u);
  EXPECT_EQ(ran.parameters().size(), 12u);
  EXPECT_EQ(ran.parameter("org.weight").value.shape, (Shape{4, 8, 3, 3}));
  EXPECT_EQ(ran.parameter("rev.bias").value.shape, (Shape{4, 1, 1, 1}));
  EXPECT_FALSE(ran.parameter("rev.bias").decays);
  EXPECT_TRUE((ran.parameter("backbone.0.bias").value.data == 0.0).all());
  // The backbone and original head do not depend on the variant.
  for (std::size_t i = 0; i < baseline.parameters().size(); ++i)
    EXPECT_EQ(baseline.parameters()[i].value.data.matrix(), ran.parameters()[i].value.data.matrix());
}

TEST(Model, InitialisationScale) {
  RanConfig cfg;
  const RanModel model(cfg);
  const Tensor& w = model.parameter("backbone.2.weight").value;
  const double fan_in = 32 * 9;
  const double var = w.data.square().mean();
  EXPECT_NEAR(std::sqrt(var), std::sqrt(2.0 / fan_in), 0.1 * std::sqrt(2.0 / fan_in));
}

TEST(Features, ShapeZeroAndDeterminism) {
  const RanModel model(RanConfig{});
  std::mt19937_64 rng(1);
  const Tensor image = random_tensor({2, 3, 32, 32}, rng, 0, 1);
  auto features = [&](const Tensor& img) {
    Graph g;
    return forward_features(bind(g, model, false), g.constant(img)).value();
  };
  const Tensor f = features(image);
  EXPECT_EQ(f.shape, (Shape{2, 64, 8, 8}));
  EXPECT_EQ(f.data.matrix(), features(image).data.matrix());
  EXPECT_TRUE((features(Tensor({1, 3, 32, 32})).data == 0.0).all());

  Graph g;
  EXPECT_THROW(forward_features(bind(g, model, false), g.constant(Tensor({1, 3, 30, 32}))), GeometryError);
}

TEST(Attention, SimpleExamples) {
  EXPECT_EQ(attention_at(reverse_attention_simple, 0.0), 0.5);
  EXPECT_NEAR(attention_at(reverse_attention_simple, -2.0), 0.880797077977882444, 1e-12);
  const double suppressed = attention_at(reverse_attention_simple, 20.0);
  EXPECT_LT(suppressed, 1e-8);
  EXPECT_GT(suppressed, 0.0);
}

TEST(Attention, NormalizedExamples) {
  EXPECT_NEAR(attention_at(reverse_attention_normalized, 0.0), 0.982013790037908442, 1e-12);
  EXPECT_EQ(attention_at(reverse_attention_normalized, -5.0), attention_at(reverse_attention_normalized, 0.0));
  EXPECT_EQ(normalized_logit_at(0.125), 0.0);
  EXPECT_EQ(attention_at(reverse_attention_normalized, 0.125), 0.5);
  EXPECT_EQ(normalized_logit_at(0.0), 4.0);
}

TEST(Attention, NormalizedLogitRange) {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({10, 10, 100, 100}, rng, -1e6, 1e6);
  Graph g;
  const Tensor pre = normalized_attention_logit(g.constant(x)).value();
  const Tensor mask = reverse_attention_normalized(g.constant(x)).value();
  for (Index i = 0; i < x.size(); ++i) {
    ASSERT_GT(pre.data[i], -4.0);
    ASSERT_LE(pre.data[i], 4.0);
    if (x.data[i] > 0) ASSERT_LT(pre.data[i], 4.0);
    ASSERT_GT(mask.data[i], 0.0);
    ASSERT_LT(mask.data[i], 1.0);
  }
}

TEST(Attention, SimpleMaskIsDecreasing) {
  // Strict on a grid where neighbouring values are resolvable in double precision.
  Tensor grid({1, 1, 1, 4001});
  for (Index i = 0; i < grid.size(); ++i) grid.data[i] = -20.0 + 0.01 * static_cast<double>(i);
  Graph g;
  const Tensor m = reverse_attention_simple(g.constant(grid)).value();
  for (Index i = 1; i < grid.size(); ++i) ASSERT_LT(m.data[i], m.data[i - 1]) << grid.data[i];

  // Never increasing on random, possibly saturating inputs.
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({1, 1, 1, 2000}, rng, -800, 800);
  std::sort(x.data.begin(), x.data.end());
  const Tensor r = reverse_attention_simple(g.constant(x)).value();
  for (Index i = 1; i < x.size(); ++i) ASSERT_LE(r.data[i], r.data[i - 1]);
}

TEST(Fuse, Examples) {
  Graph g;
  const Var org = g.constant(Tensor({1, 1, 1, 1}, {2.0}));
  const Var rev = g.constant(Tensor({1, 1, 1, 1}, {3.0}));
  const double fused = fuse(org, rev, reverse_attention_simple(org)).value().data[0];
  EXPECT_NEAR(fused, 1.642391233933647332, 1e-12);

  std::mt19937_64 rng(4);
  const Var a = g.constant(random_tensor({2, 3, 4, 4}, rng));
  const Var b = g.constant(random_tensor({2, 3, 4, 4}, rng));
  EXPECT_EQ(fuse(a, b, g.constant(Tensor({2, 3, 4, 4}))).value().data.matrix(), a.value().data.matrix());
  EXPECT_EQ(fuse(a, b, g.constant(Tensor::constant({2, 3, 4, 4}, 1.0))).value().data.matrix(),
            (a - b).value().data.matrix());
  EXPECT_THROW(fuse(a, b, g.constant(Tensor({2, 3, 4, 5}))), ShapeError);
}

TEST(Branches, VariantSemantics) {
  std::mt19937_64 rng(5);
  const Tensor image = random_tensor({2, 3, 16, 16}, rng, 0, 1);
  auto run = [&](Variant v, const BranchOptions& opts = {}) {
    const RanModel model(small_config(v, 9));
    Graph g;
    return forward(bind(g, model, false), g.constant(image), opts).materialize();
  };
  const BranchOutputs base = run(Variant::baseline);
  EXPECT_EQ(base.combined.data.matrix(), base.original.data.matrix());
  EXPECT_EQ(base.reverse.size(), 0);

  const BranchOutputs dual = run(Variant::dual_branch);
  EXPECT_TRUE((dual.attention.data == 1.0).all());
  EXPECT_EQ(dual.combined.data.matrix(), (dual.original.data - dual.reverse.data).matrix());
  const BranchOutputs forced = run(Variant::ran_s, {Tensor::constant(dual.original.shape, 1.0)});
  EXPECT_EQ(dual.combined.data.matrix(), forced.combined.data.matrix());

  for (Variant v : {Variant::ran_s, Variant::ran_n}) {
    const BranchOutputs out = run(v);
    EXPECT_EQ(out.original.shape, (Shape{2, 4, 4, 4}));
    EXPECT_EQ(out.reverse.shape, out.original.shape);
    EXPECT_EQ(out.attention.shape, out.original.shape);
    EXPECT_EQ(out.combined.shape, out.original.shape);
    EXPECT_GT(out.attention.data.minCoeff(), 0.0);
    EXPECT_LT(out.attention.data.maxCoeff(), 1.0);
    EXPECT_TRUE(out.combined.all_finite());
  }
}

TEST(Branches, StopGradientChangesOnlyTheAttentionPath) {
  std::mt19937_64 rng(6);
  const Tensor image = random_tensor({1, 3, 16, 16}, rng, 0, 1);
  const LabelMap labels = testing::random_labels(1, 16, 16, 4, rng);
  auto grads = [&](bool stop, LossWeights w) {
    RanConfig cfg = small_config(Variant::ran_s, 3);
    cfg.stop_grad_attention = stop;
    cfg.loss_weights = w;
    const RanModel model(cfg);
    Graph g;
    const BoundModel bound = bind(g, model, true);
    g.backward(total_loss(forward(bound, g.constant(image)), labels, model.config()).total);
    return bound.params[model.parameters().size() - 4].grad();  // org.weight
  };
  // Without the combined term the flag has no effect.
  EXPECT_EQ(grads(false, {1, 1, 0}).matrix(), grads(true, {1, 1, 0}).matrix());
  EXPECT_GT((grads(false, {1, 1, 1}) - grads(true, {1, 1, 1})).abs().maxCoeff(), 0.0);
}

TEST(Loss, BaselineEqualsOriginalCrossEntropy) {
  std::mt19937_64 rng(7);
  const Tensor image = random_tensor({2, 3, 16, 16}, rng, 0, 1);
  const LabelMap labels = testing::random_labels(2, 4, 4, 4, rng, 0.1);
  for (Variant v : {Variant::baseline, Variant::ran_n}) {
    RanConfig cfg = small_config(v);
    if (v != Variant::baseline) cfg.loss_weights = {1, 0, 0};
    const RanModel model(cfg);
    Graph g;
    const BranchVars out = forward(bind(g, model, false), g.constant(image));
    const LossTerms terms = total_loss(out, labels, model.config());
    EXPECT_EQ(terms.total.value().data[0], softmax_cross_entropy(out.original, labels).value().data[0]);
  }
}

TEST(Loss, ThreeTermsAndLabelDownsampling) {
  std::mt19937_64 rng(8);
  const Tensor image = random_tensor({1, 3, 16, 16}, rng, 0, 1);
  const LabelMap full = testing::random_labels(1, 16, 16, 4, rng);
  RanConfig cfg = small_config(Variant::ran_s);
  cfg.loss_weights = {1.0, 0.5, 2.0};
  const RanModel model(cfg);
  Graph g;
  const BranchVars out = forward(bind(g, model, false), g.constant(image));
  const LossTerms terms = total_loss(out, full, model.config());
  const LabelMap small = kernels::resize_labels_nearest(full, 4, 4);
  const double org = softmax_cross_entropy(out.original, small).value().data[0];
  const double rev = softmax_cross_entropy(neg(out.reverse), small).value().data[0];
  const double comb = softmax_cross_entropy(out.combined, small).value().data[0];
  EXPECT_NEAR(terms.total.value().data[0], org + 0.5 * rev + 2.0 * comb, 1e-12);
  EXPECT_EQ(terms.original.value().data[0], org);
}

TEST(Loss, PerfectLogitsGiveNearZeroLoss) {
  std::mt19937_64 rng(9);
  const LabelMap labels = testing::random_labels(1, 4, 4, 3, rng);
  Tensor good({1, 3, 4, 4});
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 4; ++x) good(0, labels(0, y, x), y, x) = 1000.0;
  Tensor rev = good;
  rev.data = -rev.data;
  Graph g;
  BranchVars out;
  out.original = g.constant(good);
  out.reverse = g.constant(rev);
  out.combined = g.constant(good);
  RanConfig cfg = small_config(Variant::ran_s);
  cfg.num_classes = 3;
  EXPECT_LT(total_loss(out, labels, cfg).total.value().data[0], 1e-5);
  EXPECT_THROW(total_loss(out, LabelMap(1, 4, 4, kIgnoreLabel), cfg), EmptyLossError);
}

TEST(ReverseGroundTruth, Examples) {
  EXPECT_EQ(reverse_ground_truth(LabelMap(1, 3, 3, 2), 2, 3), LabelMap(1, 3, 3, 0));
  EXPECT_EQ(reverse_ground_truth(LabelMap(1, 3, 3, 1), 2, 3), LabelMap(1, 3, 3, 1));
  // The class-0 indicator of a {0,1} checkerboard is inverted: 0 on class 0, 1 on class 1.
  LabelMap board(1, 4, 4), indicator(1, 4, 4), inverted(1, 4, 4);
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 4; ++x) {
      board(0, y, x) = static_cast<std::uint8_t>((x + y) % 2);
      indicator(0, y, x) = board(0, y, x) == 0 ? 1 : 0;
      inverted(0, y, x) = static_cast<std::uint8_t>(1 - indicator(0, y, x));
    }
  EXPECT_EQ(reverse_ground_truth(board, 0, 2), inverted);
  EXPECT_EQ(reverse_ground_truth(board, 1, 2), indicator);
  board(0, 0, 0) = kIgnoreLabel;
  EXPECT_EQ(reverse_ground_truth(board, 0, 2)(0, 0, 0), kIgnoreLabel);
  EXPECT_THROW(reverse_ground_truth(board, 2, 2), ClassError);
}

TEST(ReverseGroundTruth, NegShortcutMatchesBinaryReversedLabels) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor rev = random_tensor({2, 2, 5, 5}, rng, -6, 6);
    const LabelMap labels = testing::random_labels(2, 5, 5, 2, rng, 0.1);
    Graph g;
    const Var logits = g.constant(rev);
    const double shortcut = softmax_cross_entropy(neg(logits), labels).value().data[0];
    const double reference = softmax_cross_entropy(logits, reverse_ground_truth(labels, 1, 2)).value().data[0];
    EXPECT_NEAR(shortcut, reference, 1e-10);
  }
}

TEST(Predict, ArgmaxAndTies) {
  Tensor logits({1, 3, 1, 3}, {0, 5, 2, 0, 5, 7, 9, 1, 7});
  // pixel 0: class 2; pixel 1: tie between 0 and 1; pixel 2: tie between 1 and 2.
  const LabelMap p = predict(logits);
  EXPECT_EQ(p(0, 0, 0), 2);
  EXPECT_EQ(p(0, 0, 1), 0);
  EXPECT_EQ(p(0, 0, 2), 1);
  Tensor dominant({1, 4, 3, 3});
  for (Index i = 0; i < 9; ++i) dominant.plane(0, 3)[i] = 1.0;
  EXPECT_EQ(predict(dominant), LabelMap(1, 3, 3, 3));
}

TEST(Checkpoint, RoundTripWithinFloatRounding) {
  RanConfig cfg = small_config(Variant::ran_n, 21);
  cfg.decision_dilation = 2;
  cfg.stop_grad_attention = true;
  cfg.loss_weights = {1.0, 0.25, 0.5};
  const RanModel model(cfg);
  std::vector<ArrayXd> momentum;
  for (const auto& p : model.parameters()) momentum.push_back(ArrayXd::Constant(p.value.size(), 0.1));
  const Checkpoint ckpt = Checkpoint::from_model(model, 42, momentum);
  const auto bytes = encode_checkpoint(ckpt);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  EXPECT_EQ(back.iteration, 42u);
  EXPECT_EQ(back.config.variant, Variant::ran_n);
  EXPECT_EQ(back.config.decision_dilation, 2);
  EXPECT_TRUE(back.config.stop_grad_attention);
  EXPECT_EQ(back.config.loss_weights.reverse, 0.25);
  EXPECT_EQ(back.config.seed, 21u);
  const RanModel restored = back.to_model();
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const ArrayXd& a = model.parameters()[i].value.data;
    const ArrayXd& b = restored.parameters()[i].value.data;
    for (Index k = 0; k < a.size(); ++k) {
      const float f = static_cast<float>(std::abs(a[k]));
      const double ulp = std::nextafter(f, std::numeric_limits<float>::infinity()) - f;
      ASSERT_LE(std::abs(a[k] - b[k]), ulp);
    }
  }
}

TEST(Checkpoint, SaveLoadForward) {
  const RanModel model(small_config(Variant::ran_s, 4));
  const auto dir = testing::scratch_dir("ckpt_forward");
  save_checkpoint(model, dir / "m.ckpt");
  const RanModel restored = load_checkpoint(dir / "m.ckpt").to_model();
  std::mt19937_64 rng(11);
  const Tensor image = random_tensor({1, 3, 16, 16}, rng, 0, 1);
  const Tensor a = infer_logits(model, image), b = infer_logits(restored, image);
  for (Index i = 0; i < a.size(); ++i) EXPECT_LE(std::abs(a.data[i] - b.data[i]), 1e-6 * std::max(1.0, std::abs(a.data[i])));
  EXPECT_FALSE(std::filesystem::exists(dir / "m.ckpt.tmp"));
}

TEST(Checkpoint, CorruptionReportsOffset) {
  const auto bytes = encode_checkpoint(Checkpoint::from_model(RanModel(small_config(Variant::ran_s))));
  auto bad_magic = bytes;
  bad_magic[3] = 'X';
  try {
    decode_checkpoint(bad_magic);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  auto bad_version = bytes;
  bad_version[8] = 9;
  try {
    decode_checkpoint(bad_version);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }
  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 3);
  try {
    decode_checkpoint(truncated);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_GT(e.offset(), 8u);
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ran.ckpt"), Error);
}

}  // namespace
}  // namespace ran
