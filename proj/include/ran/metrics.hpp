#pragma once

#include <cstdint>
#include <vector>

#include "ran/tensor.hpp"

namespace ran {

/// counts(t, p): pixels with truth t predicted as p. Ignored pixels are skipped.
class ConfusionMatrix {
 public:
  using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

  explicit ConfusionMatrix(int num_classes);

  void add(const LabelMap& truth, const LabelMap& prediction);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  int num_classes() const { return static_cast<int>(counts_.rows()); }
  const Counts& counts() const { return counts_; }
  std::int64_t operator()(int truth, int predicted) const { return counts_(truth, predicted); }
  std::int64_t total() const { return counts_.sum(); }

 private:
  Counts counts_;
};

struct Metrics {
  double pixel_acc = 0.0;
  double mean_acc = 0.0;
  double mean_iou = 0.0;
  /// IoU per class; 0 for classes absent from both truth and prediction.
  std::vector<double> per_class_iou;
  /// Recall per class; 0 for classes absent from truth.
  std::vector<double> per_class_acc;
};

/// Pixel accuracy, mean class accuracy over classes present in the truth, and
/// mean IoU over classes present in truth or prediction.
Metrics compute_metrics(const ConfusionMatrix& cm);

/// Per filter f: sum over (n, y, x) of features[n, f, y, x] / (N * h * w).
std::vector<double> normalized_filter_response(const Tensor& features);

}  // namespace ran
