#include "hetnet/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace hetnet {

double mae(const Tensor& pred, const Tensor& gt) {
  check_same_shape(pred, gt, "mae");
  double acc = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i)
    acc += std::abs(pred.data()[i] - gt.data()[i]);
  return acc / static_cast<double>(pred.numel());
}

double iou(const Tensor& pred, const Tensor& gt, double threshold) {
  check_same_shape(pred, gt, "iou");
  std::int64_t inter = 0, uni = 0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const bool p = pred.data()[i] >= threshold;
    const bool g = gt.data()[i] >= 0.5;
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return 1.0;  // both empty
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double f_beta(const Tensor& pred, const Tensor& gt, double threshold, double beta_sq) {
  check_same_shape(pred, gt, "f_beta");
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const bool p = pred.data()[i] >= threshold;
    const bool g = gt.data()[i] >= 0.5;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  if (tp == 0) return (fp == 0 && fn == 0) ? 1.0 : 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return (1.0 + beta_sq) * precision * recall / (beta_sq * precision + recall);
}

double adaptive_threshold(const Tensor& pred) {
  return std::clamp(2.0 * mean(pred), 0.0, std::nextafter(1.0, 0.0));
}

void MetricAccumulator::add(const Tensor& pred, const Tensor& gt) {
  const double thr = opts_.adaptive ? adaptive_threshold(pred) : opts_.threshold;
  mae_sum_ += mae(pred, gt);
  iou_sum_ += iou(pred, gt, thr);
  f_sum_ += f_beta(pred, gt, thr, opts_.beta_sq);
  ++n_;
}

MetricReport MetricAccumulator::report() const {
  if (n_ == 0) throw InputError("metrics: no images evaluated");
  const double n = static_cast<double>(n_);
  return {mae_sum_ / n, iou_sum_ / n, f_sum_ / n, n_, opts_.threshold};
}

MetricReport evaluate_dataset(const std::vector<std::pair<Tensor, Tensor>>& pairs,
                              EvalOptions opts) {
  if (pairs.empty()) throw InputError("evaluate_dataset: empty prediction set");
  MetricAccumulator acc(opts);
  for (const auto& [pred, gt] : pairs) acc.add(pred, gt);
  return acc.report();
}

}  // namespace hetnet
