#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "hetnet/tensor.hpp"

namespace hetnet {

// Define-by-run reverse-mode tape. Every op below owns its forward kernel and a
// closure that scatters the output gradient back into its parents. Kernels are
// parallelized so that each output element is written by exactly one thread in
// a fixed order, which makes results independent of the thread count.

struct VarNode;
using VarNodePtr = std::shared_ptr<VarNode>;

struct VarNode {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::uint64_t seq = 0;  // creation order; reverse order is a valid topological order
  std::vector<VarNodePtr> parents;
  std::function<void(VarNode&)> backward_fn;

  void accumulate(const Tensor& g);
};

/// Shared handle to a tape node. Copies alias the same node.
class Variable {
 public:
  Variable() = default;
  explicit Variable(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return defined() && !node_->grad.empty(); }
  bool requires_grad() const { return defined() && node_->requires_grad; }
  const Shape4& shape() const { return node_->value.shape(); }
  void zero_grad() { node_->grad = Tensor(); }

  VarNodePtr node() const { return node_; }
  static Variable wrap(VarNodePtr n) {
    Variable v;
    v.node_ = std::move(n);
    return v;
  }

 private:
  VarNodePtr node_;
};

/// Runs reverse-mode accumulation from `root`, seeding its grad with ones.
void backward(const Variable& root);

bool grad_enabled();

/// Disables tape recording within scope; forwards run value-only.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

namespace detail {

/// Builds a tape node for a custom op. Used by layers with bespoke backward
/// kernels (batch norm); everything else goes through ops::.
Variable make_node(Tensor value, std::vector<VarNodePtr> parents,
                   std::function<void(VarNode&)> bwd);

}  // namespace detail

namespace ops {

struct ConvSpec {
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int dilation = 1;
  int groups = 1;
};

std::int64_t conv_out_size(std::int64_t in, const ConvSpec& spec);

/// 2D cross-correlation; weight shape (out_ch, in_ch/groups, k, k), bias (1, out_ch, 1, 1) or undefined.
Variable conv2d(const Variable& x, const Variable& weight, const Variable& bias, const ConvSpec& spec);

Variable relu(const Variable& x);
Variable sigmoid(const Variable& x);
Variable swish(const Variable& x);  // x * sigmoid(x)

Variable add(const Variable& a, const Variable& b);           // same shape
Variable mul(const Variable& a, const Variable& b);           // broadcasts size-1 axes
Variable affine(const Variable& x, double scale, double shift);
Variable div(const Variable& a, const Variable& b);           // same shape, elementwise
Variable mul_const(const Variable& x, const Tensor& k);       // elementwise by a constant map

/// Rotates the spatial plane 90 degrees counterclockwise d times (d may be negative).
Variable rot90(const Variable& x, int d);
Tensor rot90(const Tensor& x, int d);

/// Swaps the two spatial axes: out[b,c,y,x] = in[b,c,x,y].
Variable transpose_hw(const Variable& x);

Variable mean_over_w(const Variable& x);  // (B,C,H,W) -> (B,C,H,1)
Variable mean_over_h(const Variable& x);  // (B,C,H,W) -> (B,C,1,W)

Variable concat(const std::vector<Variable>& xs, int axis);  // axis 1 (channels) or 2 (height)
Variable slice(const Variable& x, int axis, std::int64_t start, std::int64_t len);

Variable adaptive_avg_pool(const Variable& x, std::int64_t out_h, std::int64_t out_w);
Variable max_pool(const Variable& x, int kernel, int stride, int pad);
Variable bilinear_upsample(const Variable& x, std::int64_t out_h, std::int64_t out_w);

Variable sum_per_image(const Variable& x);  // (B,C,H,W) -> (B,1,1,1)
Variable mean_all(const Variable& x);       // -> (1,1,1,1)

/// Numerically stable elementwise binary cross entropy on logits against a constant target.
Variable bce_with_logits(const Variable& logits, const Tensor& target);

}  // namespace ops

double sigmoid_scalar(double x);

}  // namespace hetnet
