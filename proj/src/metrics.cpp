#include "ran/metrics.hpp"

namespace ran {

ConfusionMatrix::ConfusionMatrix(int num_classes) : counts_(Counts::Zero(num_classes, num_classes)) {
  if (num_classes < 1) throw ConfigError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(const LabelMap& truth, const LabelMap& prediction) {
  if (truth.n != prediction.n || truth.h != prediction.h || truth.w != prediction.w)
    throw ShapeError("confusion: truth and prediction sizes differ");
  const int C = num_classes();
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    const int t = truth.data[i];
    if (t == kIgnoreLabel) continue;
    const int p = prediction.data[i];
    if (t >= C || p >= C) throw ClassError("confusion: label out of range");
    ++counts_(t, p);
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.num_classes() != num_classes()) throw ShapeError("confusion: class counts differ");
  counts_ += other.counts_;
  return *this;
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
  const int C = cm.num_classes();
  const auto& m = cm.counts();
  Metrics out;
  out.per_class_iou.assign(static_cast<std::size_t>(C), 0.0);
  out.per_class_acc.assign(static_cast<std::size_t>(C), 0.0);
  const std::int64_t total = m.sum();
  if (total == 0) return out;

  out.pixel_acc = static_cast<double>(m.trace()) / static_cast<double>(total);
  double acc_sum = 0.0, iou_sum = 0.0;
  int acc_classes = 0, iou_classes = 0;
  for (int c = 0; c < C; ++c) {
    const std::int64_t row = m.row(c).sum();
    const std::int64_t col = m.col(c).sum();
    const std::int64_t hit = m(c, c);
    if (row > 0) {
      out.per_class_acc[static_cast<std::size_t>(c)] = static_cast<double>(hit) / static_cast<double>(row);
      acc_sum += out.per_class_acc[static_cast<std::size_t>(c)];
      ++acc_classes;
    }
    const std::int64_t uni = row + col - hit;
    if (uni > 0) {
      out.per_class_iou[static_cast<std::size_t>(c)] = static_cast<double>(hit) / static_cast<double>(uni);
      iou_sum += out.per_class_iou[static_cast<std::size_t>(c)];
      ++iou_classes;
    }
  }
  out.mean_acc = acc_classes ? acc_sum / acc_classes : 0.0;
  out.mean_iou = iou_classes ? iou_sum / iou_classes : 0.0;
  return out;
}

std::vector<double> normalized_filter_response(const Tensor& features) {
  const Shape& s = features.shape;
  if (s.plane() == 0) throw ShapeError("normalized_filter_response: empty spatial extent");
  std::vector<double> out(static_cast<std::size_t>(s.c), 0.0);
  const double area = static_cast<double>(s.n * s.plane());
  for (Index f = 0; f < s.c; ++f) {
    double acc = 0.0;
    for (Index n = 0; n < s.n; ++n) {
      const double* p = features.plane(n, f);
      for (Index i = 0; i < s.plane(); ++i) acc += p[i];
    }
    out[static_cast<std::size_t>(f)] = acc / area;
  }
  return out;
}

}  // namespace ran
