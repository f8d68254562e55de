#include "ran/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "ran/augment.hpp"
#include "ran/netpbm.hpp"

namespace ran {
namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class BatchSampler {
 public:
  BatchSampler(std::size_t size, std::uint64_t seed) : order_(size), rng_(mix(seed)) { reshuffle(); }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (cursor_ == order_.size()) reshuffle();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }

  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t cursor_ = 0;
};

}  // namespace

Tensor stack_images(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("stack_images: empty batch");
  const Shape one = samples[indices[0]].image.shape;
  Tensor out({static_cast<Index>(indices.size()), one.c, one.h, one.w});
  const Index stride = one.c * one.plane();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Tensor& img = samples[indices[i]].image;
    if (!(img.shape == one)) throw ShapeError("stack_images: samples differ in size");
    out.data.segment(static_cast<Index>(i) * stride, stride) = img.data;
  }
  return out;
}

LabelMap stack_labels(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("stack_labels: empty batch");
  const LabelMap& first = samples[indices[0]].labels;
  LabelMap out(static_cast<Index>(indices.size()), first.h, first.w);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const LabelMap& l = samples[indices[i]].labels;
    if (l.h != first.h || l.w != first.w) throw ShapeError("stack_labels: samples differ in size");
    std::copy(l.data.begin(), l.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * l.data.size()));
  }
  return out;
}

TrainResult train(RanModel& model, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                  const ProgressFn& progress) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("train: dataset is empty");

  auto& params = model.parameters();
  TrainResult result;
  for (const auto& p : params) result.momentum.push_back(ArrayXd::Zero(p.value.size()));
  result.log.reserve(static_cast<std::size_t>(cfg.max_iter));

  BatchSampler sampler(dataset.size(), cfg.seed);
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  std::vector<ArrayXd> grads(params.size());
  std::vector<Sample> batch(batch_size);
  std::vector<std::size_t> slots(batch_size);
  std::iota(slots.begin(), slots.end(), std::size_t{0});

  for (std::int64_t iter = 0; iter < cfg.max_iter; ++iter) {
    const auto picks = sampler.next(batch_size);
    for (std::size_t s = 0; s < batch_size; ++s) {
      const Sample& src = dataset[picks[s]];
      batch[s] = cfg.augment ? augment(src, mix(cfg.seed ^ mix(static_cast<std::uint64_t>(iter) * 4096 + s))) : src;
    }

    Graph g;
    const BoundModel bound = bind(g, model, true);
    const Var image = g.constant(stack_images(batch, slots));
    const BranchVars outputs = forward(bound, image);
    const LossTerms loss = total_loss(outputs, stack_labels(batch, slots), model.config());
    g.backward(loss.total);

    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor& v = bound.params[i].value();
      grads[i] = v.grad ? *v.grad : ArrayXd::Zero(v.size());
    }
    const double lr = poly_lr(iter, cfg);
    sgd_step(params, grads, result.momentum, lr, cfg);

    LogRow row;
    row.iter = iter;
    row.lr = lr;
    row.loss_org = loss.original.value().data[0];
    row.loss_rev = loss.reverse.valid() ? loss.reverse.value().data[0] : 0.0;
    row.loss_comb = loss.combined.valid() ? loss.combined.value().data[0] : row.loss_org;
    row.total = loss.total.value().data[0];
    result.log.push_back(row);
    if (progress) progress(row);
  }
  return result;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string format_train_log(const std::vector<LogRow>& log) {
  std::string out = "iter,lr,loss_org,loss_rev,loss_comb,total\n";
  for (const auto& r : log) {
    out += std::to_string(r.iter) + ',' + format_number(r.lr) + ',' + format_number(r.loss_org) + ',' +
           format_number(r.loss_rev) + ',' + format_number(r.loss_comb) + ',' + format_number(r.total) + '\n';
  }
  return out;
}

void write_train_log(const std::vector<LogRow>& log, const std::filesystem::path& path) {
  const std::string text = format_train_log(log);
  write_file({text.begin(), text.end()}, path);
}

Index msc_extent(Index extent, double scale) {
  if (!(scale > 0.0)) throw ConfigError("scales must be positive");
  const Index steps = std::lround(static_cast<double>(extent) * scale / static_cast<double>(kDownsample));
  return std::max<Index>(1, steps) * kDownsample;
}

Tensor msc_predict(const RanModel& model, const Tensor& image, std::span<const double> scales) {
  if (scales.empty()) throw ConfigError("msc_predict: no scales given");
  const Index ref_h = image.shape.h / kDownsample;
  const Index ref_w = image.shape.w / kDownsample;
  Tensor fused;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const Tensor scaled =
        resize_bilinear(image, msc_extent(image.shape.h, scales[i]), msc_extent(image.shape.w, scales[i]));
    const Tensor logits = resize_bilinear(infer_logits(model, scaled), ref_h, ref_w);
    fused = i == 0 ? logits : elementwise_max(fused, logits);
  }
  return fused;
}

LabelMap predict_at(const Tensor& logits, Index height, Index width) {
  return kernels::resize_labels_nearest(predict(logits), height, width);
}

ConfusionMatrix evaluate_confusion(const RanModel& model, const std::vector<Sample>& dataset,
                                   std::span<const double> scales) {
  if (dataset.empty()) throw ConfigError("evaluate: dataset is empty");
  ConfusionMatrix cm(model.config().num_classes);
  for (const Sample& s : dataset) {
    const Tensor logits = msc_predict(model, s.image, scales);
    cm.add(s.labels, predict_at(logits, s.labels.h, s.labels.w));
  }
  return cm;
}

Metrics evaluate(const RanModel& model, const std::vector<Sample>& dataset, std::span<const double> scales) {
  return compute_metrics(evaluate_confusion(model, dataset, scales));
}

}  // namespace ran
