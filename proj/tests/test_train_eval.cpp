#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "ran/ablation.hpp"
#include "ran/train.hpp"

namespace ran {
namespace {

RanConfig small_model(Variant v, std::uint64_t seed = 0) {
  RanConfig cfg;
  cfg.variant = v;
  cfg.backbone_channels = {4, 8, 8, 8};
  cfg.seed = seed;
  return cfg;
}

std::vector<Sample> corpus(std::size_t count, std::uint64_t first = 0) {
  SceneConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  std::vector<Sample> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_scene(cfg, first + i));
  return out;
}

TrainConfig short_run(std::int64_t iters, double lr = 0.01) {
  TrainConfig cfg;
  cfg.max_iter = iters;
  cfg.base_lr = lr;
  cfg.batch_size = 4;
  return cfg;
}

TEST(PolyLr, Examples) {
  TrainConfig cfg;
  cfg.max_iter = 2000;
  EXPECT_EQ(poly_lr(0, cfg), 0.00025);
  EXPECT_EQ(poly_lr(2000, cfg), 0.0);
  EXPECT_NEAR(poly_lr(1000, cfg), 1.33971682817036646e-4, 1e-15);
  EXPECT_THROW(poly_lr(2001, cfg), IterationError);
  EXPECT_THROW(poly_lr(-1, cfg), IterationError);
}

TEST(PolyLr, StrictlyDecreasing) {
  TrainConfig cfg;
  cfg.max_iter = 500;
  for (double power : {0.5, 0.9, 2.0}) {
    cfg.lr_power = power;
    for (std::int64_t i = 1; i <= cfg.max_iter; ++i) ASSERT_LT(poly_lr(i, cfg), poly_lr(i - 1, cfg));
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.momentum = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.max_iter = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.base_lr = -1e-3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

std::vector<Parameter> scalar_param(double value, bool decays = true) {
  return {Parameter{"p", Tensor({1, 1, 1, 1}, {value}), decays}};
}

TEST(Sgd, ScalarExample) {
  auto params = scalar_param(1.0);
  std::vector<ArrayXd> grads{ArrayXd::Constant(1, 0.5)};
  std::vector<ArrayXd> v{ArrayXd::Zero(1)};
  TrainConfig cfg;
  sgd_step(params, grads, v, 0.1, cfg);
  EXPECT_NEAR(v[0][0], 0.5001, 1e-15);
  EXPECT_NEAR(params[0].value.data[0], 0.94999, 1e-15);
}

TEST(Sgd, PlainStepAndNoOps) {
  TrainConfig cfg;
  cfg.momentum = 0;
  cfg.weight_decay = 0;
  auto params = scalar_param(2.0);
  std::vector<ArrayXd> grads{ArrayXd::Constant(1, 3.0)};
  std::vector<ArrayXd> v{ArrayXd::Zero(1)};
  sgd_step(params, grads, v, 0.5, cfg);
  EXPECT_EQ(params[0].value.data[0], 0.5);

  grads[0].setZero();
  v[0].setZero();
  sgd_step(params, grads, v, 0.5, cfg);
  EXPECT_EQ(params[0].value.data[0], 0.5);

  TrainConfig full;
  grads[0].setConstant(1.0);
  sgd_step(params, grads, v, 0.0, full);
  EXPECT_EQ(params[0].value.data[0], 0.5);
  EXPECT_NE(v[0][0], 0.0);
}

TEST(Sgd, DecayOnlyWhereEnabled) {
  TrainConfig cfg;
  cfg.weight_decay = 0.5;
  cfg.momentum = 0;
  auto params = scalar_param(2.0, false);
  std::vector<ArrayXd> grads{ArrayXd::Zero(1)};
  std::vector<ArrayXd> v{ArrayXd::Zero(1)};
  sgd_step(params, grads, v, 1.0, cfg);
  EXPECT_EQ(params[0].value.data[0], 2.0);
}

TEST(Sgd, ShapeMismatch) {
  auto params = scalar_param(1.0);
  std::vector<ArrayXd> grads{ArrayXd::Zero(2)};
  std::vector<ArrayXd> v{ArrayXd::Zero(1)};
  EXPECT_THROW(sgd_step(params, grads, v, 0.1, TrainConfig{}), ShapeError);
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  RanModel model(small_model(Variant::baseline));
  const RanModel init = model;
  const auto log = train(model, corpus(4), short_run(1, 0.0)).log;
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].lr, 0.0);
  for (std::size_t i = 0; i < init.parameters().size(); ++i)
    EXPECT_EQ(model.parameters()[i].value.data.matrix(), init.parameters()[i].value.data.matrix());
}

TEST(Train, SameSeedIsBitIdentical) {
  const auto data = corpus(6);
  auto run = [&](std::uint64_t seed) {
    RanModel model(small_model(Variant::ran_n, 1));
    TrainConfig cfg = short_run(5);
    cfg.seed = seed;
    const TrainResult r = train(model, data, cfg);
    return std::pair{format_train_log(r.log), model.parameters()};
  };
  const auto a = run(3), b = run(3), c = run(4);
  EXPECT_EQ(a.first, b.first);
  for (std::size_t i = 0; i < a.second.size(); ++i)
    EXPECT_EQ(a.second[i].value.data.matrix(), b.second[i].value.data.matrix());
  EXPECT_NE(a.first, c.first);
}

TEST(Train, LogConventions) {
  RanModel base(small_model(Variant::baseline));
  const auto blog = train(base, corpus(4), short_run(3)).log;
  for (const auto& row : blog) {
    EXPECT_EQ(row.loss_rev, 0.0);
    EXPECT_EQ(row.loss_comb, row.loss_org);
    EXPECT_EQ(row.total, row.loss_org);
  }
  EXPECT_EQ(blog[1].iter, 1);
  EXPECT_EQ(blog[1].lr, poly_lr(1, short_run(3)));

  RanModel ran(small_model(Variant::ran_s));
  const auto rlog = train(ran, corpus(4), short_run(2)).log;
  EXPECT_NEAR(rlog[0].total, rlog[0].loss_org + rlog[0].loss_rev + rlog[0].loss_comb, 1e-12);

  const std::string csv = format_train_log(rlog);
  EXPECT_EQ(csv.rfind("iter,lr,loss_org,loss_rev,loss_comb,total\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333");
  EXPECT_EQ(format_number(0.0001339716828), "0.000133972");
}

TEST(Train, BaselineLossDecreases) {
  RanModel model(small_model(Variant::baseline));
  TrainConfig cfg = short_run(150, 0.01);
  cfg.augment = false;
  const auto log = train(model, corpus(24), cfg).log;
  double head = 0, tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += log[static_cast<std::size_t>(i)].total;
    tail += log[log.size() - 1 - static_cast<std::size_t>(i)].total;
  }
  EXPECT_LT(tail, head);
}

TEST(Train, EmptyDatasetIsRejected) {
  RanModel model(small_model(Variant::ran_s));
  EXPECT_THROW(train(model, {}, short_run(1)), ConfigError);
  EXPECT_THROW(evaluate(model, {}, std::array{1.0}), ConfigError);
}

TEST(Msc, SingleScaleEqualsPlainForward) {
  const RanModel model(small_model(Variant::ran_s, 2));
  const Sample s = corpus(1)[0];
  const Tensor plain = infer_logits(model, s.image);
  const std::array one{1.0};
  const std::array twice{1.0, 1.0};
  EXPECT_EQ(msc_predict(model, s.image, one).data.matrix(), plain.data.matrix());
  EXPECT_EQ(msc_predict(model, s.image, twice).data.matrix(), plain.data.matrix());
  EXPECT_THROW(msc_predict(model, s.image, std::span<const double>{}), ConfigError);
}

TEST(Msc, MatchesScriptedPipeline) {
  const RanModel model(small_model(Variant::ran_n, 3));
  const Tensor image = corpus(1, 5)[0].image;
  const std::array scales{0.5, 1.0, 1.5};
  const Tensor fused = msc_predict(model, image, scales);
  const std::array<Index, 3> extents{8, 16, 24};
  Tensor expected;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const Tensor scaled = testing::reference_bilinear(image, extents[i], extents[i]);
    const Tensor logits = testing::reference_bilinear(infer_logits(model, scaled), 4, 4);
    if (i == 0) {
      expected = logits;
    } else {
      for (Index k = 0; k < logits.size(); ++k) expected.data[k] = std::max(expected.data[k], logits.data[k]);
    }
  }
  ASSERT_EQ(fused.shape, expected.shape);
  EXPECT_LT(testing::max_abs_diff(fused, expected), 1e-6);
}

TEST(Msc, ExtentRounding) {
  EXPECT_EQ(msc_extent(32, 0.5), 16);
  EXPECT_EQ(msc_extent(32, 0.75), 24);
  EXPECT_EQ(msc_extent(32, 1.25), 40);
  EXPECT_EQ(msc_extent(20, 0.75), 16);
  EXPECT_EQ(msc_extent(8, 0.1), 4);
  EXPECT_THROW(msc_extent(32, 0.0), ConfigError);
}

LabelMap labels_from(std::initializer_list<int> v) {
  LabelMap l(1, 1, static_cast<Index>(v.size()));
  std::transform(v.begin(), v.end(), l.data.begin(), [](int x) { return static_cast<std::uint8_t>(x); });
  return l;
}

TEST(Metrics, FourPixelExample) {
  ConfusionMatrix cm(2);
  cm.add(labels_from({0, 0, 1, 1}), labels_from({0, 1, 1, 1}));
  const Metrics m = compute_metrics(cm);
  EXPECT_DOUBLE_EQ(m.pixel_acc, 0.75);
  EXPECT_DOUBLE_EQ(m.per_class_iou[0], 0.5);
  EXPECT_DOUBLE_EQ(m.per_class_iou[1], 2.0 / 3.0);
  EXPECT_NEAR(m.mean_iou, 0.583333333333333, 1e-12);
  EXPECT_DOUBLE_EQ(m.mean_acc, 0.75);
}

TEST(Metrics, PerfectAndAbsentClasses) {
  ConfusionMatrix cm(5);
  cm.add(labels_from({0, 2, 2, 4}), labels_from({0, 2, 2, 4}));
  const Metrics m = compute_metrics(cm);
  EXPECT_EQ(m.pixel_acc, 1.0);
  EXPECT_EQ(m.mean_acc, 1.0);
  EXPECT_EQ(m.mean_iou, 1.0);

  ConfusionMatrix bg(5);
  bg.add(LabelMap(1, 4, 4, 0), LabelMap(1, 4, 4, 0));
  EXPECT_EQ(compute_metrics(bg).mean_iou, 1.0);
}

TEST(Metrics, IgnoredPixelsAreSkipped) {
  ConfusionMatrix cm(3);
  cm.add(labels_from({0, 255, 2, 255}), labels_from({0, 1, 1, 2}));
  EXPECT_EQ(cm.total(), 2);
  EXPECT_EQ(cm(2, 1), 1);
  EXPECT_THROW(cm.add(labels_from({0, 1}), labels_from({0})), ShapeError);
}

TEST(Metrics, RandomPairsMatchOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int classes = 2 + trial % 5;
    std::vector<LabelMap> truth, pred;
    ConfusionMatrix cm(classes);
    for (int s = 0; s < 3; ++s) {
      truth.push_back(testing::random_labels(1, 5, 7, classes, rng, 0.1));
      pred.push_back(testing::random_labels(1, 5, 7, classes, rng));
      cm.add(truth.back(), pred.back());
    }
    const auto ref = testing::reference_metrics(truth, pred, classes);
    std::int64_t non_ignored = 0;
    for (const auto& t : truth) non_ignored += std::count_if(t.data.begin(), t.data.end(), [](auto v) { return v != 255; });
    EXPECT_EQ(cm.total(), non_ignored);
    for (int t = 0; t < classes; ++t)
      for (int p = 0; p < classes; ++p) EXPECT_EQ(cm(t, p), ref.counts[t][p]);
    const Metrics m = compute_metrics(cm);
    EXPECT_NEAR(m.pixel_acc, ref.pixel_acc, 1e-12);
    EXPECT_NEAR(m.mean_acc, ref.mean_acc, 1e-12);
    EXPECT_NEAR(m.mean_iou, ref.mean_iou, 1e-12);
    for (int c = 0; c < classes; ++c) {
      EXPECT_LE(m.per_class_iou[c], m.per_class_acc[c] + 1e-15);
      EXPECT_GE(m.per_class_iou[c], 0.0);
      EXPECT_LE(m.per_class_acc[c], 1.0);
    }
  }
}

TEST(Evaluate, OrderIndependent) {
  const RanModel model(small_model(Variant::ran_s, 5));
  auto data = corpus(6);
  const std::array one{1.0};
  const ConfusionMatrix a = evaluate_confusion(model, data, one);
  std::reverse(data.begin(), data.end());
  std::swap(data[1], data[4]);
  const ConfusionMatrix b = evaluate_confusion(model, data, one);
  EXPECT_EQ(a.counts(), b.counts());
  EXPECT_EQ(a.total(), 6 * 16 * 16);
}

TEST(Evaluate, PredictionsAreUpsampledToImageSize) {
  Tensor logits({1, 2, 2, 2});
  logits(0, 1, 0, 1) = 1.0;
  const LabelMap p = predict_at(logits, 8, 8);
  EXPECT_EQ(p.h, 8);
  for (Index y = 0; y < 8; ++y)
    for (Index x = 0; x < 8; ++x) EXPECT_EQ(p(0, y, x), (y < 4 && x >= 4) ? 1 : 0);
}

TEST(FilterResponse, Examples) {
  EXPECT_EQ(normalized_filter_response(Tensor::constant({2, 3, 4, 4}, 1.0)), (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(normalized_filter_response(Tensor({1, 2, 3, 3})), (std::vector<double>{0, 0}));
  Tensor half({1, 1, 4, 4});
  for (Index i = 0; i < 8; ++i) half.data[i] = 2.0;
  EXPECT_EQ(normalized_filter_response(half), std::vector<double>{1.0});
}

TEST(Ablation, SharedInitAndStandaloneBaseline) {
  const auto train_set = corpus(6), test_set = corpus(3, 100);
  TrainConfig tcfg = short_run(3);
  const std::array<std::uint64_t, 1> seeds{7};
  const std::array scales{0.5, 1.0};
  const AblationResult result = ablate(small_model(Variant::baseline), train_set, test_set, tcfg, seeds, scales);
  ASSERT_EQ(result.runs.size(), 4u);
  for (const auto& r : result.runs) EXPECT_EQ(r.backbone_hash, result.runs[0].backbone_hash);

  RanModel standalone(small_model(Variant::baseline, 7));
  tcfg.seed = 7;
  train(standalone, train_set, tcfg);
  const Metrics m = evaluate(standalone, test_set, std::array{1.0});
  EXPECT_EQ(result.runs[0].variant, Variant::baseline);
  EXPECT_EQ(result.runs[0].single_scale.mean_iou, m.mean_iou);
  EXPECT_EQ(result.runs[0].single_scale.pixel_acc, m.pixel_acc);
  EXPECT_EQ(result.rows[0].mean_iou, m.mean_iou);
  EXPECT_EQ(result.rows[0].mean_iou_msc, evaluate(standalone, test_set, scales).mean_iou);

  const std::string csv = format_ablation_csv(result.rows);
  EXPECT_EQ(csv.rfind("variant,pixel_acc,mean_acc,mean_iou,mean_iou_msc\nbaseline,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

}  // namespace
}  // namespace ran
