#pragma once

#include <vector>

#include "hetnet/tensor.hpp"

namespace hetnet {

struct MetricReport {
  double mae = 0.0;
  double iou = 0.0;
  double f_beta = 0.0;
  std::int64_t n_images = 0;
  double threshold = 0.5;
};

/// Mean |pred - gt| over all pixels of one image. pred in [0,1], gt binary.
double mae(const Tensor& pred, const Tensor& gt);

/// Intersection over union after thresholding pred; 1.0 when both masks are empty.
double iou(const Tensor& pred, const Tensor& gt, double threshold = 0.5);

/// F-measure with beta^2 weighting (default 0.3, precision-leaning).
/// Conventions: 1.0 when prediction and ground truth are both empty; 0.0 when
/// nothing is predicted against a nonempty ground truth (and vice versa).
double f_beta(const Tensor& pred, const Tensor& gt, double threshold = 0.5, double beta_sq = 0.3);

/// Per-image adaptive threshold: twice the mean prediction, clamped to [0, 1).
double adaptive_threshold(const Tensor& pred);

struct EvalOptions {
  double threshold = 0.5;
  bool adaptive = false;   // per-image 2*mean threshold instead of the fixed one
  double beta_sq = 0.3;
};

/// Streaming per-image accumulator; dataset metrics are per-image averages.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(EvalOptions opts = {}) : opts_(opts) {}
  void add(const Tensor& pred, const Tensor& gt);
  MetricReport report() const;

 private:
  EvalOptions opts_;
  double mae_sum_ = 0.0, iou_sum_ = 0.0, f_sum_ = 0.0;
  std::int64_t n_ = 0;
};

MetricReport evaluate_dataset(const std::vector<std::pair<Tensor, Tensor>>& pairs,
                              EvalOptions opts = {});

}  // namespace hetnet
