#include "hetnet/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace hetnet {

namespace {

std::atomic<std::uint64_t> g_seq{0};
thread_local bool g_grad_enabled = true;

constexpr std::int64_t kParallelCutoff = 1 << 14;  // elements below this run serial

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

void VarNode::accumulate(const Tensor& g) {
  if (grad.empty()) grad = Tensor(value.shape());
  double* dst = grad.data();
  const double* src = g.data();
  const std::int64_t n = grad.numel();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

Variable::Variable(Tensor value, bool requires_grad) {
  node_ = std::make_shared<VarNode>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->seq = ++g_seq;
}

namespace detail {

Variable make_node(Tensor value, std::vector<VarNodePtr> parents,
                   std::function<void(VarNode&)> bwd) {
  auto n = std::make_shared<VarNode>();
  n->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || (p && p->requires_grad);
  if (g_grad_enabled && any) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(bwd);
  }
  n->seq = ++g_seq;
  return Variable::wrap(n);
}

}  // namespace detail

void backward(const Variable& root) {
  if (!root.defined()) throw InputError("backward: undefined variable");
  // Reachable subgraph, then reverse creation order (a valid topological order).
  std::vector<VarNodePtr> order;
  std::unordered_set<VarNode*> seen;
  std::vector<VarNodePtr> stack{root.node()};
  while (!stack.empty()) {
    VarNodePtr n = stack.back();
    stack.pop_back();
    if (!n || !n->requires_grad || seen.count(n.get())) continue;
    seen.insert(n.get());
    order.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p);
  }
  std::sort(order.begin(), order.end(),
            [](const VarNodePtr& a, const VarNodePtr& b) { return a->seq > b->seq; });
  root.node()->accumulate(Tensor::full(root.shape(), 1.0));
  for (const auto& n : order) {
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace ops {

using detail::make_node;

std::int64_t conv_out_size(std::int64_t in, const ConvSpec& spec) {
  const std::int64_t eff = static_cast<std::int64_t>(spec.dilation) * (spec.kernel - 1) + 1;
  return (in + 2 * spec.pad - eff) / spec.stride + 1;
}

namespace {

// Output index range [lo, hi) for which o*stride - pad + k_off lands inside [0, in).
struct IdxRange {
  std::int64_t lo, hi;
};

IdxRange valid_range(std::int64_t in, std::int64_t out, int stride, int pad, std::int64_t k_off) {
  const std::int64_t num_lo = pad - k_off;
  std::int64_t lo = num_lo <= 0 ? 0 : (num_lo + stride - 1) / stride;
  const std::int64_t num_hi = in - 1 + pad - k_off;
  if (num_hi < 0) return {0, 0};
  std::int64_t hi = std::min<std::int64_t>(out - 1, num_hi / stride) + 1;
  if (lo >= hi) return {0, 0};
  return {lo, hi};
}

void conv_forward_kernel(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvSpec& sp,
                         Tensor& out) {
  const Shape4 xs = x.shape(), ws = w.shape(), os = out.shape();
  const std::int64_t icg = ws.c;  // in channels per group
  const std::int64_t ocg = ws.b / sp.groups;
  const std::int64_t items = os.b * os.c;
#pragma omp parallel for schedule(static) if (items * os.h * os.w * icg > kParallelCutoff)
  for (std::int64_t item = 0; item < items; ++item) {
    const std::int64_t b = item / os.c;
    const std::int64_t oc = item % os.c;
    const std::int64_t g = oc / ocg;
    double* dst = out.plane(b, oc);
    const double bv = bias ? bias->data()[oc] : 0.0;
    for (std::int64_t i = 0; i < os.h * os.w; ++i) dst[i] = bv;
    for (std::int64_t ic = 0; ic < icg; ++ic) {
      const double* src = x.plane(b, g * icg + ic);
      const double* wk = w.plane(oc, ic);
      for (int ky = 0; ky < sp.kernel; ++ky) {
        const std::int64_t offy = static_cast<std::int64_t>(ky) * sp.dilation;
        const IdxRange ry = valid_range(xs.h, os.h, sp.stride, sp.pad, offy);
        for (int kx = 0; kx < sp.kernel; ++kx) {
          const std::int64_t offx = static_cast<std::int64_t>(kx) * sp.dilation;
          const IdxRange rx = valid_range(xs.w, os.w, sp.stride, sp.pad, offx);
          const double wv = wk[ky * sp.kernel + kx];
          if (wv == 0.0) continue;
          for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
            const std::int64_t iy = oy * sp.stride - sp.pad + offy;
            double* drow = dst + oy * os.w;
            const double* srow = src + iy * xs.w - sp.pad + offx;
            if (sp.stride == 1) {
              for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox) drow[ox] += wv * srow[ox];
            } else {
              for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox)
                drow[ox] += wv * srow[ox * sp.stride];
            }
          }
        }
      }
    }
  }
}

void conv_backward_input(const Tensor& gout, const Tensor& w, const ConvSpec& sp, Tensor& gin) {
  const Shape4 xs = gin.shape(), ws = w.shape(), os = gout.shape();
  const std::int64_t icg = ws.c;
  const std::int64_t ocg = ws.b / sp.groups;
  const std::int64_t items = xs.b * xs.c;
#pragma omp parallel for schedule(static) if (items * os.h * os.w > kParallelCutoff)
  for (std::int64_t item = 0; item < items; ++item) {
    const std::int64_t b = item / xs.c;
    const std::int64_t ic_full = item % xs.c;
    const std::int64_t g = ic_full / icg;
    const std::int64_t ic = ic_full % icg;
    double* dst = gin.plane(b, ic_full);
    for (std::int64_t oc = g * ocg; oc < (g + 1) * ocg; ++oc) {
      const double* go = gout.plane(b, oc);
      const double* wk = w.plane(oc, ic);
      for (int ky = 0; ky < sp.kernel; ++ky) {
        const std::int64_t offy = static_cast<std::int64_t>(ky) * sp.dilation;
        const IdxRange ry = valid_range(xs.h, os.h, sp.stride, sp.pad, offy);
        for (int kx = 0; kx < sp.kernel; ++kx) {
          const std::int64_t offx = static_cast<std::int64_t>(kx) * sp.dilation;
          const IdxRange rx = valid_range(xs.w, os.w, sp.stride, sp.pad, offx);
          const double wv = wk[ky * sp.kernel + kx];
          if (wv == 0.0) continue;
          for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
            const std::int64_t iy = oy * sp.stride - sp.pad + offy;
            const double* grow = go + oy * os.w;
            double* drow = dst + iy * xs.w - sp.pad + offx;
            if (sp.stride == 1) {
              for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox) drow[ox] += wv * grow[ox];
            } else {
              for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox)
                drow[ox * sp.stride] += wv * grow[ox];
            }
          }
        }
      }
    }
  }
}

void conv_backward_weight(const Tensor& x, const Tensor& gout, const ConvSpec& sp, Tensor& gw) {
  const Shape4 xs = x.shape(), ws = gw.shape(), os = gout.shape();
  const std::int64_t icg = ws.c;
  const std::int64_t ocg = ws.b / sp.groups;
  const std::int64_t items = ws.b * icg;
#pragma omp parallel for schedule(static) if (items > 4)
  for (std::int64_t item = 0; item < items; ++item) {
    const std::int64_t oc = item / icg;
    const std::int64_t ic = item % icg;
    const std::int64_t g = oc / ocg;
    double* wk = gw.plane(oc, ic);
    for (int ky = 0; ky < sp.kernel; ++ky) {
      const std::int64_t offy = static_cast<std::int64_t>(ky) * sp.dilation;
      const IdxRange ry = valid_range(xs.h, os.h, sp.stride, sp.pad, offy);
      for (int kx = 0; kx < sp.kernel; ++kx) {
        const std::int64_t offx = static_cast<std::int64_t>(kx) * sp.dilation;
        const IdxRange rx = valid_range(xs.w, os.w, sp.stride, sp.pad, offx);
        double acc = 0.0;
        for (std::int64_t b = 0; b < xs.b; ++b) {
          const double* src = x.plane(b, g * icg + ic);
          const double* go = gout.plane(b, oc);
          for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
            const std::int64_t iy = oy * sp.stride - sp.pad + offy;
            const double* grow = go + oy * os.w;
            const double* srow = src + iy * xs.w - sp.pad + offx;
            if (sp.stride == 1) {
              for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox) acc += grow[ox] * srow[ox];
            } else {
              for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox)
                acc += grow[ox] * srow[ox * sp.stride];
            }
          }
        }
        wk[ky * sp.kernel + kx] += acc;
      }
    }
  }
}

}  // namespace

Variable conv2d(const Variable& x, const Variable& weight, const Variable& bias,
                const ConvSpec& spec) {
  const Shape4 xs = x.shape();
  const Shape4 ws = weight.shape();
  if (ws.c * spec.groups != xs.c)
    throw ConfigError("conv2d: input channels " + std::to_string(xs.c) + " do not match weight " +
                      ws.str() + " with groups " + std::to_string(spec.groups));
  if (ws.b % spec.groups != 0) throw ConfigError("conv2d: output channels not divisible by groups");
  const std::int64_t oh = conv_out_size(xs.h, spec), ow = conv_out_size(xs.w, spec);
  if (oh <= 0 || ow <= 0)
    throw InputError("conv2d: input " + xs.str() + " too small for kernel");
  Tensor out(xs.b, ws.b, oh, ow);
  conv_forward_kernel(x.value(), weight.value(), bias.defined() ? &bias.value() : nullptr, spec,
                      out);

  std::vector<VarNodePtr> parents{x.node(), weight.node()};
  if (bias.defined()) parents.push_back(bias.node());
  ConvSpec sp = spec;
  return make_node(std::move(out), std::move(parents), [sp](VarNode& self) {
    const auto& xn = self.parents[0];
    const auto& wn = self.parents[1];
    if (xn->requires_grad) {
      Tensor gin(xn->value.shape());
      conv_backward_input(self.grad, wn->value, sp, gin);
      xn->accumulate(gin);
    }
    if (wn->requires_grad) {
      Tensor gw(wn->value.shape());
      conv_backward_weight(xn->value, self.grad, sp, gw);
      wn->accumulate(gw);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      const Shape4 os = self.grad.shape();
      Tensor gb(1, os.c, 1, 1);
      for (std::int64_t oc = 0; oc < os.c; ++oc) {
        double acc = 0.0;
        for (std::int64_t b = 0; b < os.b; ++b) {
          const double* g = self.grad.plane(b, oc);
          for (std::int64_t i = 0; i < os.h * os.w; ++i) acc += g[i];
        }
        gb.data()[oc] = acc;
      }
      self.parents[2]->accumulate(gb);
    }
  });
}

Variable relu(const Variable& x) {
  Tensor out(x.shape());
  const double* src = x.value().data();
  double* dst = out.data();
  const std::int64_t n = out.numel();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  return make_node(std::move(out), {x.node()}, [](VarNode& self) {
    const Tensor& xin = self.parents[0]->value;
    Tensor gin(xin.shape());
    const std::int64_t n = gin.numel();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i)
      gin.data()[i] = xin.data()[i] > 0.0 ? self.grad.data()[i] : 0.0;
    self.parents[0]->accumulate(gin);
  });
}

Variable sigmoid(const Variable& x) {
  Tensor out(x.shape());
  const std::int64_t n = out.numel();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = sigmoid_scalar(x.value().data()[i]);
  return make_node(std::move(out), {x.node()}, [](VarNode& self) {
    Tensor gin(self.value.shape());
    const std::int64_t n = gin.numel();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i) {
      const double y = self.value.data()[i];
      gin.data()[i] = self.grad.data()[i] * y * (1.0 - y);
    }
    self.parents[0]->accumulate(gin);
  });
}

Variable swish(const Variable& x) {
  Tensor out(x.shape());
  const std::int64_t n = out.numel();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = x.value().data()[i];
    out.data()[i] = v * sigmoid_scalar(v);
  }
  return make_node(std::move(out), {x.node()}, [](VarNode& self) {
    const Tensor& xin = self.parents[0]->value;
    Tensor gin(xin.shape());
    const std::int64_t n = gin.numel();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i) {
      const double s = sigmoid_scalar(xin.data()[i]);
      gin.data()[i] = self.grad.data()[i] * (s + xin.data()[i] * s * (1.0 - s));
    }
    self.parents[0]->accumulate(gin);
  });
}

Variable add(const Variable& a, const Variable& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor out(a.shape());
  const std::int64_t n = out.numel();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.value().data()[i] + b.value().data()[i];
  return make_node(std::move(out), {a.node(), b.node()}, [](VarNode& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad);
  });
}

namespace {

Shape4 broadcast_shape(const Shape4& a, const Shape4& b) {
  auto pick = [](std::int64_t x, std::int64_t y, const char* axis) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw InputError(std::string("mul: incompatible ") + axis + " axes " + std::to_string(x) +
                     " vs " + std::to_string(y));
  };
  return {pick(a.b, b.b, "batch"), pick(a.c, b.c, "channel"), pick(a.h, b.h, "height"),
          pick(a.w, b.w, "width")};
}

inline std::int64_t bidx(const Shape4& s, std::int64_t b, std::int64_t c, std::int64_t h,
                         std::int64_t w) {
  return ((std::min(b, s.b - 1) * s.c + std::min(c, s.c - 1)) * s.h + std::min(h, s.h - 1)) * s.w +
         std::min(w, s.w - 1);
}

// grad of a broadcast factor: sum g*other over the axes where `target` has size 1
void reduce_into(const Tensor& g, const Tensor& other, const Shape4& os, Tensor& acc) {
  const Shape4 ts = acc.shape();
  const Shape4 hs = other.shape();
  const bool par = ts.b == os.b;  // no reduction over batch -> per-batch writes are disjoint
#pragma omp parallel for schedule(static) if (par && os.numel() > kParallelCutoff)
  for (std::int64_t b = 0; b < os.b; ++b)
    for (std::int64_t c = 0; c < os.c; ++c)
      for (std::int64_t h = 0; h < os.h; ++h)
        for (std::int64_t w = 0; w < os.w; ++w) {
          const std::int64_t oi = ((b * os.c + c) * os.h + h) * os.w + w;
          acc.data()[bidx(ts, b, c, h, w)] += g.data()[oi] * other.data()[bidx(hs, b, c, h, w)];
        }
}

}  // namespace

Variable mul(const Variable& a, const Variable& b) {
  const Shape4 os = broadcast_shape(a.shape(), b.shape());
  Tensor out(os);
  const Shape4 as = a.shape(), bs = b.shape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
#pragma omp parallel for schedule(static) if (os.numel() > kParallelCutoff)
  for (std::int64_t bb = 0; bb < os.b; ++bb)
    for (std::int64_t c = 0; c < os.c; ++c)
      for (std::int64_t h = 0; h < os.h; ++h)
        for (std::int64_t w = 0; w < os.w; ++w)
          out.data()[((bb * os.c + c) * os.h + h) * os.w + w] =
              av.data()[bidx(as, bb, c, h, w)] * bv.data()[bidx(bs, bb, c, h, w)];
  return make_node(std::move(out), {a.node(), b.node()}, [os](VarNode& self) {
    const auto& an = self.parents[0];
    const auto& bn = self.parents[1];
    if (an->requires_grad) {
      Tensor ga(an->value.shape());
      reduce_into(self.grad, bn->value, os, ga);
      an->accumulate(ga);
    }
    if (bn->requires_grad) {
      Tensor gb(bn->value.shape());
      reduce_into(self.grad, an->value, os, gb);
      bn->accumulate(gb);
    }
  });
}

Variable affine(const Variable& x, double scale, double shift) {
  Tensor out(x.shape());
  const std::int64_t n = out.numel();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = scale * x.value().data()[i] + shift;
  return make_node(std::move(out), {x.node()}, [scale](VarNode& self) {
    Tensor gin(self.value.shape());
    for (std::int64_t i = 0; i < gin.numel(); ++i) gin.data()[i] = scale * self.grad.data()[i];
    self.parents[0]->accumulate(gin);
  });
}

Variable div(const Variable& a, const Variable& b) {
  check_same_shape(a.value(), b.value(), "div");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out.data()[i] = a.value().data()[i] / b.value().data()[i];
  return make_node(std::move(out), {a.node(), b.node()}, [](VarNode& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      Tensor ga(av.shape());
      for (std::int64_t i = 0; i < ga.numel(); ++i)
        ga.data()[i] = self.grad.data()[i] / bv.data()[i];
      self.parents[0]->accumulate(ga);
    }
    if (self.parents[1]->requires_grad) {
      Tensor gb(bv.shape());
      for (std::int64_t i = 0; i < gb.numel(); ++i)
        gb.data()[i] = -self.grad.data()[i] * av.data()[i] / (bv.data()[i] * bv.data()[i]);
      self.parents[1]->accumulate(gb);
    }
  });
}

Variable mul_const(const Variable& x, const Tensor& k) {
  check_same_shape(x.value(), k, "mul_const");
  Tensor out(x.shape());
  const std::int64_t n = out.numel();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = x.value().data()[i] * k.data()[i];
  return make_node(std::move(out), {x.node()}, [k](VarNode& self) {
    Tensor gin(self.value.shape());
    for (std::int64_t i = 0; i < gin.numel(); ++i)
      gin.data()[i] = self.grad.data()[i] * k.data()[i];
    self.parents[0]->accumulate(gin);
  });
}

Tensor rot90(const Tensor& x, int d) {
  const int k = ((d % 4) + 4) % 4;
  const Shape4 s = x.shape();
  if (k == 0) return x;
  const bool swap = (k % 2) == 1;
  Tensor out(s.b, s.c, swap ? s.w : s.h, swap ? s.h : s.w);
  const Shape4 os = out.shape();
  for (std::int64_t b = 0; b < s.b; ++b)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double* src = x.plane(b, c);
      double* dst = out.plane(b, c);
      for (std::int64_t y = 0; y < os.h; ++y)
        for (std::int64_t x2 = 0; x2 < os.w; ++x2) {
          std::int64_t iy, ix;
          if (k == 1) {  // counterclockwise: out(y,x) = in(x, W-1-y)
            iy = x2;
            ix = s.w - 1 - y;
          } else if (k == 2) {
            iy = s.h - 1 - y;
            ix = s.w - 1 - x2;
          } else {  // k == 3, clockwise
            iy = s.h - 1 - x2;
            ix = y;
          }
          dst[y * os.w + x2] = src[iy * s.w + ix];
        }
    }
  return out;
}

Variable rot90(const Variable& x, int d) {
  Tensor out = rot90(x.value(), d);
  return make_node(std::move(out), {x.node()}, [d](VarNode& self) {
    self.parents[0]->accumulate(rot90(self.grad, -d));
  });
}

Variable transpose_hw(const Variable& x) {
  const Shape4 s = x.shape();
  Tensor out(s.b, s.c, s.w, s.h);
  for (std::int64_t b = 0; b < s.b; ++b)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double* src = x.value().plane(b, c);
      double* dst = out.plane(b, c);
      for (std::int64_t y = 0; y < s.w; ++y)
        for (std::int64_t x2 = 0; x2 < s.h; ++x2) dst[y * s.h + x2] = src[x2 * s.w + y];
    }
  return make_node(std::move(out), {x.node()}, [](VarNode& self) {
    const Shape4 gs = self.grad.shape();
    Tensor gin(gs.b, gs.c, gs.w, gs.h);
    for (std::int64_t b = 0; b < gs.b; ++b)
      for (std::int64_t c = 0; c < gs.c; ++c) {
        const double* src = self.grad.plane(b, c);
        double* dst = gin.plane(b, c);
        for (std::int64_t y = 0; y < gs.w; ++y)
          for (std::int64_t x2 = 0; x2 < gs.h; ++x2) dst[y * gs.h + x2] = src[x2 * gs.w + y];
      }
    self.parents[0]->accumulate(gin);
  });
}

namespace {

Variable mean_over_axis(const Variable& x, bool over_w) {
  const Shape4 s = x.shape();
  Tensor out(s.b, s.c, over_w ? s.h : 1, over_w ? 1 : s.w);
  for (std::int64_t b = 0; b < s.b; ++b)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double* src = x.value().plane(b, c);
      double* dst = out.plane(b, c);
      if (over_w) {
        for (std::int64_t y = 0; y < s.h; ++y) {
          double acc = 0.0;
          for (std::int64_t x2 = 0; x2 < s.w; ++x2) acc += src[y * s.w + x2];
          dst[y] = acc / static_cast<double>(s.w);
        }
      } else {
        for (std::int64_t x2 = 0; x2 < s.w; ++x2) {
          double acc = 0.0;
          for (std::int64_t y = 0; y < s.h; ++y) acc += src[y * s.w + x2];
          dst[x2] = acc / static_cast<double>(s.h);
        }
      }
    }
  return detail::make_node(std::move(out), {x.node()}, [over_w, s](VarNode& self) {
    Tensor gin(s);
    const double inv = 1.0 / static_cast<double>(over_w ? s.w : s.h);
    for (std::int64_t b = 0; b < s.b; ++b)
      for (std::int64_t c = 0; c < s.c; ++c) {
        const double* g = self.grad.plane(b, c);
        double* dst = gin.plane(b, c);
        for (std::int64_t y = 0; y < s.h; ++y)
          for (std::int64_t x2 = 0; x2 < s.w; ++x2)
            dst[y * s.w + x2] = inv * g[over_w ? y : x2];
      }
    self.parents[0]->accumulate(gin);
  });
}

}  // namespace

Variable mean_over_w(const Variable& x) { return mean_over_axis(x, true); }
Variable mean_over_h(const Variable& x) { return mean_over_axis(x, false); }

Variable concat(const std::vector<Variable>& xs, int axis) {
  if (xs.empty()) throw InputError("concat: empty input list");
  if (axis != 1 && axis != 2) throw InputError("concat: only channel or height axis supported");
  Shape4 os = xs[0].shape();
  std::int64_t total = 0;
  for (const auto& v : xs) {
    const Shape4 s = v.shape();
    total += axis == 1 ? s.c : s.h;
    if (s.b != os.b || s.w != os.w || (axis == 1 && s.h != os.h) || (axis == 2 && s.c != os.c))
      throw InputError("concat: incompatible shapes " + os.str() + " vs " + s.str());
  }
  if (axis == 1)
    os.c = total;
  else
    os.h = total;
  Tensor out(os);
  std::vector<VarNodePtr> parents;
  std::int64_t off = 0;
  for (const auto& v : xs) {
    const Shape4 s = v.shape();
    for (std::int64_t b = 0; b < s.b; ++b)
      for (std::int64_t c = 0; c < s.c; ++c) {
        const double* src = v.value().plane(b, c);
        if (axis == 1) {
          std::copy(src, src + s.h * s.w, out.plane(b, off + c));
        } else {
          std::copy(src, src + s.h * s.w, out.plane(b, c) + off * os.w);
        }
      }
    off += axis == 1 ? s.c : s.h;
    parents.push_back(v.node());
  }
  std::vector<Shape4> shapes;
  for (const auto& v : xs) shapes.push_back(v.shape());
  return make_node(std::move(out), std::move(parents), [axis, shapes, os](VarNode& self) {
    std::int64_t off = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      const Shape4 s = shapes[i];
      if (self.parents[i]->requires_grad) {
        Tensor g(s);
        for (std::int64_t b = 0; b < s.b; ++b)
          for (std::int64_t c = 0; c < s.c; ++c) {
            double* dst = g.plane(b, c);
            const double* src = axis == 1 ? self.grad.plane(b, off + c)
                                          : self.grad.plane(b, c) + off * os.w;
            std::copy(src, src + s.h * s.w, dst);
          }
        self.parents[i]->accumulate(g);
      }
      off += axis == 1 ? s.c : s.h;
    }
  });
}

Variable slice(const Variable& x, int axis, std::int64_t start, std::int64_t len) {
  if (axis != 1 && axis != 2) throw InputError("slice: only channel or height axis supported");
  const Shape4 s = x.shape();
  const std::int64_t limit = axis == 1 ? s.c : s.h;
  if (start < 0 || len <= 0 || start + len > limit) throw InputError("slice: range out of bounds");
  Shape4 os = s;
  (axis == 1 ? os.c : os.h) = len;
  Tensor out(os);
  for (std::int64_t b = 0; b < os.b; ++b)
    for (std::int64_t c = 0; c < os.c; ++c) {
      double* dst = out.plane(b, c);
      const double* src = axis == 1 ? x.value().plane(b, start + c)
                                    : x.value().plane(b, c) + start * s.w;
      std::copy(src, src + os.h * os.w, dst);
    }
  return make_node(std::move(out), {x.node()}, [axis, start, s](VarNode& self) {
    Tensor g(s);
    const Shape4 os = self.grad.shape();
    for (std::int64_t b = 0; b < os.b; ++b)
      for (std::int64_t c = 0; c < os.c; ++c) {
        const double* src = self.grad.plane(b, c);
        double* dst = axis == 1 ? g.plane(b, start + c) : g.plane(b, c) + start * s.w;
        std::copy(src, src + os.h * os.w, dst);
      }
    self.parents[0]->accumulate(g);
  });
}

namespace {

inline std::int64_t pool_start(std::int64_t i, std::int64_t in, std::int64_t out) {
  return i * in / out;
}
inline std::int64_t pool_end(std::int64_t i, std::int64_t in, std::int64_t out) {
  return ((i + 1) * in + out - 1) / out;
}

}  // namespace

Variable adaptive_avg_pool(const Variable& x, std::int64_t out_h, std::int64_t out_w) {
  const Shape4 s = x.shape();
  if (out_h <= 0 || out_w <= 0 || out_h > s.h || out_w > s.w)
    throw InputError("adaptive_avg_pool: invalid output size");
  Tensor out(s.b, s.c, out_h, out_w);
  for (std::int64_t b = 0; b < s.b; ++b)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double* src = x.value().plane(b, c);
      double* dst = out.plane(b, c);
      for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const std::int64_t y0 = pool_start(oy, s.h, out_h), y1 = pool_end(oy, s.h, out_h);
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          const std::int64_t x0 = pool_start(ox, s.w, out_w), x1 = pool_end(ox, s.w, out_w);
          double acc = 0.0;
          for (std::int64_t y = y0; y < y1; ++y)
            for (std::int64_t x2 = x0; x2 < x1; ++x2) acc += src[y * s.w + x2];
          dst[oy * out_w + ox] = acc / static_cast<double>((y1 - y0) * (x1 - x0));
        }
      }
    }
  return make_node(std::move(out), {x.node()}, [s, out_h, out_w](VarNode& self) {
    Tensor gin(s);
    for (std::int64_t b = 0; b < s.b; ++b)
      for (std::int64_t c = 0; c < s.c; ++c) {
        const double* g = self.grad.plane(b, c);
        double* dst = gin.plane(b, c);
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
          const std::int64_t y0 = pool_start(oy, s.h, out_h), y1 = pool_end(oy, s.h, out_h);
          for (std::int64_t ox = 0; ox < out_w; ++ox) {
            const std::int64_t x0 = pool_start(ox, s.w, out_w), x1 = pool_end(ox, s.w, out_w);
            const double gv = g[oy * out_w + ox] / static_cast<double>((y1 - y0) * (x1 - x0));
            for (std::int64_t y = y0; y < y1; ++y)
              for (std::int64_t x2 = x0; x2 < x1; ++x2) dst[y * s.w + x2] += gv;
          }
        }
      }
    self.parents[0]->accumulate(gin);
  });
}

Variable max_pool(const Variable& x, int kernel, int stride, int pad) {
  const Shape4 s = x.shape();
  ConvSpec spec{kernel, stride, pad, 1, 1};
  const std::int64_t oh = conv_out_size(s.h, spec), ow = conv_out_size(s.w, spec);
  if (oh <= 0 || ow <= 0) throw InputError("max_pool: input too small");
  Tensor out(s.b, s.c, oh, ow);
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(s.b * s.c * oh * ow));
  const std::int64_t items = s.b * s.c;
#pragma omp parallel for schedule(static) if (items * oh * ow > kParallelCutoff)
  for (std::int64_t item = 0; item < items; ++item) {
    const std::int64_t b = item / s.c, c = item % s.c;
    const double* src = x.value().plane(b, c);
    double* dst = out.plane(b, c);
    std::int64_t* am = argmax->data() + item * oh * ow;
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t bi = 0;
        for (int ky = 0; ky < kernel; ++ky) {
          const std::int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= s.h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const std::int64_t ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= s.w) continue;
            if (src[iy * s.w + ix] > best) {
              best = src[iy * s.w + ix];
              bi = iy * s.w + ix;
            }
          }
        }
        dst[oy * ow + ox] = best;
        am[oy * ow + ox] = bi;
      }
  }
  return make_node(std::move(out), {x.node()}, [s, oh, ow, argmax](VarNode& self) {
    Tensor gin(s);
    for (std::int64_t item = 0; item < s.b * s.c; ++item) {
      const double* g = self.grad.data() + item * oh * ow;
      double* dst = gin.data() + item * s.h * s.w;
      const std::int64_t* am = argmax->data() + item * oh * ow;
      for (std::int64_t i = 0; i < oh * ow; ++i) dst[am[i]] += g[i];
    }
    self.parents[0]->accumulate(gin);
  });
}

Variable bilinear_upsample(const Variable& x, std::int64_t out_h, std::int64_t out_w) {
  const Shape4 s = x.shape();
  Tensor out = bilinear_resize(x.value(), out_h, out_w);
  if (s.h == out_h && s.w == out_w) {
    // resize is the identity; keep the graph edge
    return make_node(std::move(out), {x.node()},
                     [](VarNode& self) { self.parents[0]->accumulate(self.grad); });
  }
  return make_node(std::move(out), {x.node()}, [s, out_h, out_w](VarNode& self) {
    Tensor gin(s);
    const double sy = static_cast<double>(s.h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(s.w) / static_cast<double>(out_w);
    const std::int64_t items = s.b * s.c;
#pragma omp parallel for schedule(static) if (items * out_h * out_w > kParallelCutoff)
    for (std::int64_t item = 0; item < items; ++item) {
      const double* g = self.grad.data() + item * out_h * out_w;
      double* dst = gin.data() + item * s.h * s.w;
      for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
        std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
        const double wy = fy - static_cast<double>(y0);
        std::int64_t y1 = std::clamp<std::int64_t>(y0 + 1, 0, s.h - 1);
        y0 = std::clamp<std::int64_t>(y0, 0, s.h - 1);
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          const double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
          std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
          const double wx = fx - static_cast<double>(x0);
          std::int64_t x1 = std::clamp<std::int64_t>(x0 + 1, 0, s.w - 1);
          x0 = std::clamp<std::int64_t>(x0, 0, s.w - 1);
          const double gv = g[oy * out_w + ox];
          dst[y0 * s.w + x0] += (1.0 - wy) * (1.0 - wx) * gv;
          dst[y0 * s.w + x1] += (1.0 - wy) * wx * gv;
          dst[y1 * s.w + x0] += wy * (1.0 - wx) * gv;
          dst[y1 * s.w + x1] += wy * wx * gv;
        }
      }
    }
    self.parents[0]->accumulate(gin);
  });
}

Variable sum_per_image(const Variable& x) {
  const Shape4 s = x.shape();
  Tensor out(s.b, 1, 1, 1);
  for (std::int64_t b = 0; b < s.b; ++b) {
    const double* src = x.value().data() + b * s.c * s.h * s.w;
    double acc = 0.0;
    for (std::int64_t i = 0; i < s.c * s.h * s.w; ++i) acc += src[i];
    out.data()[b] = acc;
  }
  return make_node(std::move(out), {x.node()}, [s](VarNode& self) {
    Tensor gin(s);
    for (std::int64_t b = 0; b < s.b; ++b) {
      double* dst = gin.data() + b * s.c * s.h * s.w;
      const double g = self.grad.data()[b];
      for (std::int64_t i = 0; i < s.c * s.h * s.w; ++i) dst[i] = g;
    }
    self.parents[0]->accumulate(gin);
  });
}

Variable mean_all(const Variable& x) {
  const Shape4 s = x.shape();
  Tensor out(1, 1, 1, 1);
  out.data()[0] = mean(x.value());
  return make_node(std::move(out), {x.node()}, [s](VarNode& self) {
    Tensor gin(s);
    const double g = self.grad.data()[0] / static_cast<double>(s.numel());
    for (std::int64_t i = 0; i < s.numel(); ++i) gin.data()[i] = g;
    self.parents[0]->accumulate(gin);
  });
}

Variable bce_with_logits(const Variable& logits, const Tensor& target) {
  check_same_shape(logits.value(), target, "bce_with_logits");
  Tensor out(logits.shape());
  const std::int64_t n = out.numel();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = logits.value().data()[i];
    const double z = target.data()[i];
    out.data()[i] = std::max(x, 0.0) - x * z + std::log1p(std::exp(-std::abs(x)));
  }
  return make_node(std::move(out), {logits.node()}, [target](VarNode& self) {
    const Tensor& xin = self.parents[0]->value;
    Tensor gin(xin.shape());
    const std::int64_t n = gin.numel();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i)
      gin.data()[i] = self.grad.data()[i] * (sigmoid_scalar(xin.data()[i]) - target.data()[i]);
    self.parents[0]->accumulate(gin);
  });
}

}  // namespace ops
}  // namespace hetnet
