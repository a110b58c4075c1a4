#include "hetnet/losses.hpp"

#include <cmath>

namespace hetnet {

Tensor ppa_weight_map(const Tensor& gt, const PpaOptions& opts) {
  const Shape4 s = gt.shape();
  const int r = opts.weight_kernel / 2;
  Tensor w(s);
  for (std::int64_t b = 0; b < s.b; ++b)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double* src = gt.plane(b, c);
      double* dst = w.plane(b, c);
      // column prefix sums per row window would be faster; sizes here are small
      std::vector<double> integral(static_cast<std::size_t>((s.h + 1) * (s.w + 1)), 0.0);
      for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x)
          integral[static_cast<std::size_t>((y + 1) * (s.w + 1) + x + 1)] =
              src[y * s.w + x] + integral[static_cast<std::size_t>(y * (s.w + 1) + x + 1)] +
              integral[static_cast<std::size_t>((y + 1) * (s.w + 1) + x)] -
              integral[static_cast<std::size_t>(y * (s.w + 1) + x)];
      auto box = [&](std::int64_t y0, std::int64_t x0, std::int64_t y1, std::int64_t x1) {
        return integral[static_cast<std::size_t>(y1 * (s.w + 1) + x1)] -
               integral[static_cast<std::size_t>(y0 * (s.w + 1) + x1)] -
               integral[static_cast<std::size_t>(y1 * (s.w + 1) + x0)] +
               integral[static_cast<std::size_t>(y0 * (s.w + 1) + x0)];
      };
      for (std::int64_t y = 0; y < s.h; ++y) {
        const std::int64_t y0 = std::max<std::int64_t>(0, y - r);
        const std::int64_t y1 = std::min<std::int64_t>(s.h, y + r + 1);
        for (std::int64_t x = 0; x < s.w; ++x) {
          const std::int64_t x0 = std::max<std::int64_t>(0, x - r);
          const std::int64_t x1 = std::min<std::int64_t>(s.w, x + r + 1);
          const double avg = box(y0, x0, y1, x1) / static_cast<double>((y1 - y0) * (x1 - x0));
          dst[y * s.w + x] = 1.0 + opts.weight_factor * std::abs(avg - src[y * s.w + x]);
        }
      }
    }
  return w;
}

Variable ppa_loss(const Variable& logits, const Tensor& gt, const PpaOptions& opts) {
  check_same_shape(logits.value(), gt, "ppa_loss");
  const Tensor w = ppa_weight_map(gt, opts);

  // weighted BCE: per image sum(w * bce) / sum(w), then mean over the batch
  Variable wbce_num = ops::sum_per_image(ops::mul_const(ops::bce_with_logits(logits, gt), w));
  Variable w_sum = ops::sum_per_image(ops::mul_const(Variable(Tensor::full(gt.shape(), 1.0)), w));
  Variable wbce = ops::mean_all(ops::div(wbce_num, w_sum));

  // weighted IoU: 1 - (sum(w*p*gt) + s) / (sum(w*(p + gt - p*gt)) + s)
  Variable p = ops::sigmoid(logits);
  Variable p_gt = ops::mul_const(p, gt);
  Variable union_term = ops::add(ops::affine(p_gt, -1.0, 0.0),
                                 ops::add(p, Variable(gt)));  // p + gt - p*gt
  Variable inter = ops::sum_per_image(ops::mul_const(p_gt, w));
  Variable uni = ops::sum_per_image(ops::mul_const(union_term, w));
  Variable ratio = ops::div(ops::affine(inter, 1.0, opts.smooth), ops::affine(uni, 1.0, opts.smooth));
  Variable wiou = ops::mean_all(ops::affine(ratio, -1.0, 1.0));

  return ops::add(wbce, wiou);
}

Variable edge_bce_loss(const Variable& logits, const Tensor& gt_edge) {
  check_same_shape(logits.value(), gt_edge, "edge_bce_loss");
  return ops::mean_all(ops::bce_with_logits(logits, gt_edge));
}

Tensor resize_gt(const Tensor& gt, std::int64_t h, std::int64_t w) {
  if (gt.shape().h == h && gt.shape().w == w) return gt;
  return threshold(bilinear_resize(gt, h, w), 0.5);
}

LossTerms total_loss(const FusionGraphOutputs& outputs, const Tensor& gt_mask,
                     const Tensor& gt_edge, const PpaOptions& opts) {
  if (!outputs.main_output.defined()) throw ConfigError("total_loss: missing main output");
  if (outputs.aux_outputs.size() != 4)
    throw ConfigError("total_loss: deep supervision outputs missing (need 4 auxiliary maps)");
  if (!outputs.edge_output.defined())
    throw ConfigError("total_loss: edge output missing");

  LossTerms terms;
  const Shape4 es = outputs.edge_output.shape();
  Variable edge = edge_bce_loss(outputs.edge_output, resize_gt(gt_edge, es.h, es.w));
  terms.l_bce_edge = edge.value().data()[0];

  Variable acc = edge;
  for (int i = 0; i < 5; ++i) {
    const Variable& map = i == 0 ? outputs.main_output : outputs.aux_outputs[static_cast<std::size_t>(i - 1)];
    const Shape4 ms = map.shape();
    Variable term = ppa_loss(map, resize_gt(gt_mask, ms.h, ms.w), opts);
    terms.l_ppa_per_scale[static_cast<std::size_t>(i)] = term.value().data()[0];
    acc = ops::add(acc, ops::affine(term, 1.0 / static_cast<double>(1 << i), 0.0));
  }
  terms.total = acc;
  terms.total_value = acc.value().data()[0];
  return terms;
}

}  // namespace hetnet
