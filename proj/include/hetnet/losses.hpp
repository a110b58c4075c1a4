#pragma once

#include "hetnet/assembly.hpp"

namespace hetnet {

struct PpaOptions {
  int weight_kernel = 31;     // local-average window for the hard-pixel weight
  double weight_factor = 5.0; // w = 1 + factor * |local_avg(gt) - gt|
  double smooth = 1.0;        // additive smoothing in the weighted IoU ratio
};

/// Hard-pixel weight map: 1 + factor * |avg_pool(gt) - gt|. The local average
/// runs over the valid in-bounds window, so a uniform mask yields weight 1
/// everywhere.
Tensor ppa_weight_map(const Tensor& gt, const PpaOptions& opts = {});

/// Pixel-position-aware loss: weighted BCE plus weighted IoU, per image,
/// averaged over the batch. gt must be binary and match the logits' shape.
Variable ppa_loss(const Variable& logits, const Tensor& gt, const PpaOptions& opts = {});

/// Mean binary cross entropy on logits, numerically stable under saturation.
Variable edge_bce_loss(const Variable& logits, const Tensor& gt_edge);

/// Binary ground truth resampled to (h, w): bilinear then threshold at 0.5.
Tensor resize_gt(const Tensor& gt, std::int64_t h, std::int64_t w);

struct LossTerms {
  double l_bce_edge = 0.0;
  std::array<double, 5> l_ppa_per_scale{};  // index 0 = main output, 1..4 = aux maps
  double total_value = 0.0;
  Variable total;  // backward through this
};

/// Combined supervision: edge BCE plus PPA over the main map (weight 1) and
/// the four auxiliary maps (weights 1/2, 1/4, 1/8, 1/16). Aux terms are taken
/// at the maps' native resolutions against rescaled ground truth.
LossTerms total_loss(const FusionGraphOutputs& outputs, const Tensor& gt_mask,
                     const Tensor& gt_edge, const PpaOptions& opts = {});

}  // namespace hetnet
