#include "hetnet/nn.hpp"

#include <cmath>

namespace hetnet {

std::int64_t LayerTable::total_params() const {
  std::int64_t t = 0;
  for (const auto& r : rows) t += r.params;
  return t;
}

std::int64_t LayerTable::total_macs() const {
  std::int64_t t = 0;
  for (const auto& r : rows) t += r.macs;
  return t;
}

std::string join_key(const std::string& prefix, const std::string& name) {
  if (prefix.empty()) return name;
  if (name.empty()) return prefix;
  return prefix + "." + name;
}

void Module::set_train(bool on) {
  training_ = on;
  on_set_train(on);
  for (auto& [name, child] : children_) child->set_train(on);
}

void Module::for_each_state(const std::string& prefix, const StateFn& fn) {
  for (auto& [name, v] : params_) fn(join_key(prefix, name), v.mutable_value(), true);
  for (auto& [name, t] : buffers_) fn(join_key(prefix, name), *t, false);
  for (auto& [name, child] : children_) child->for_each_state(join_key(prefix, name), fn);
}

void Module::for_each_param(const std::string& prefix, const ParamFn& fn) {
  for (auto& [name, v] : params_) fn(join_key(prefix, name), v);
  for (auto& [name, child] : children_) child->for_each_param(join_key(prefix, name), fn);
}

std::int64_t Module::num_trainable_params() {
  std::int64_t n = 0;
  for_each_param("", [&](const std::string&, Variable& v) { n += v.value().numel(); });
  return n;
}

void Module::register_param(std::string name, Variable v) {
  params_.emplace_back(std::move(name), std::move(v));
}

void Module::register_buffer(std::string name, Tensor* t) {
  buffers_.emplace_back(std::move(name), t);
}

void Module::register_child(std::string name, Module* m) {
  children_.emplace_back(std::move(name), m);
}

Conv2d::Conv2d(std::mt19937& rng, int in_ch, int out_ch, int kernel, int stride, int pad,
               int dilation, int groups, bool with_bias)
    : in_ch_(in_ch), out_ch_(out_ch), spec_{kernel, stride, pad, dilation, groups} {
  if (in_ch <= 0 || out_ch <= 0 || kernel <= 0)
    throw ConfigError("Conv2d: non-positive dimensions");
  if (in_ch % groups != 0 || out_ch % groups != 0)
    throw ConfigError("Conv2d: channels not divisible by groups");
  Tensor w(out_ch, in_ch / groups, kernel, kernel);
  const double fan_in = static_cast<double>(in_ch / groups) * kernel * kernel;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (std::int64_t i = 0; i < w.numel(); ++i) w.data()[i] = dist(rng);
  weight = Variable(std::move(w), true);
  register_param("weight", weight);
  if (with_bias) {
    bias = Variable(Tensor(1, out_ch, 1, 1), true);
    register_param("bias", bias);
  }
}

Variable Conv2d::forward(const Variable& x) { return ops::conv2d(x, weight, bias, spec_); }

std::int64_t Conv2d::param_count() const {
  std::int64_t n = weight.value().numel();
  if (bias.defined()) n += bias.value().numel();
  return n;
}

Shape4 Conv2d::describe(Shape4 in, const std::string& prefix, LayerTable& table) const {
  const Shape4 out{in.b, out_ch_, ops::conv_out_size(in.h, spec_), ops::conv_out_size(in.w, spec_)};
  const std::int64_t per_out = static_cast<std::int64_t>(in_ch_ / spec_.groups) * spec_.kernel *
                               spec_.kernel;
  std::int64_t macs = out.numel() * per_out;
  if (bias.defined()) macs += out.numel();
  table.add(prefix, "conv" + std::to_string(spec_.kernel) + "x" + std::to_string(spec_.kernel), out,
            param_count(), macs);
  return out;
}

BatchNorm2d::BatchNorm2d(int channels, bool affine, double eps, double momentum)
    : running_mean(1, channels, 1, 1),
      running_var(Tensor::full({1, channels, 1, 1}, 1.0)),
      channels_(channels),
      affine_(affine),
      eps_(eps),
      momentum_(momentum) {
  if (affine_) {
    gamma = Variable(Tensor::full({1, channels, 1, 1}, 1.0), true);
    beta = Variable(Tensor(1, channels, 1, 1), true);
    register_param("weight", gamma);
    register_param("bias", beta);
  }
  register_buffer("running_mean", &running_mean);
  register_buffer("running_var", &running_var);
}

Variable BatchNorm2d::forward(const Variable& x) {
  const Shape4 s = x.shape();
  if (s.c != channels_)
    throw ConfigError("BatchNorm2d: expected " + std::to_string(channels_) + " channels, got " +
                      std::to_string(s.c));
  const std::int64_t plane = s.h * s.w;
  const std::int64_t n = s.b * plane;

  if (!training()) {
    // Frozen statistics: a per-channel affine map.
    Tensor out(s);
    const std::int64_t numel = s.numel();
    std::vector<double> scale(static_cast<std::size_t>(s.c)), shift(static_cast<std::size_t>(s.c));
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double inv = 1.0 / std::sqrt(running_var.data()[c] + eps_);
      const double g = affine_ ? gamma.value().data()[c] : 1.0;
      const double b = affine_ ? beta.value().data()[c] : 0.0;
      scale[static_cast<std::size_t>(c)] = g * inv;
      shift[static_cast<std::size_t>(c)] = b - running_mean.data()[c] * g * inv;
    }
#pragma omp parallel for schedule(static) if (numel > (1 << 14))
    for (std::int64_t i = 0; i < numel; ++i) {
      const std::int64_t c = (i / plane) % s.c;
      out.data()[i] = scale[static_cast<std::size_t>(c)] * x.value().data()[i] +
                      shift[static_cast<std::size_t>(c)];
    }
    std::vector<VarNodePtr> parents{x.node()};
    if (affine_) {
      parents.push_back(gamma.node());
      parents.push_back(beta.node());
    }
    const bool affine = affine_;
    Tensor rm = running_mean, rv = running_var;
    const double eps = eps_;
    return detail::make_node(std::move(out), std::move(parents),
                             [s, plane, affine, rm, rv, eps](VarNode& self) {
      const auto& xn = self.parents[0];
      if (xn->requires_grad) {
        Tensor gin(s);
        for (std::int64_t c = 0; c < s.c; ++c) {
          const double g = affine ? self.parents[1]->value.data()[c] : 1.0;
          const double k = g / std::sqrt(rv.data()[c] + eps);
          for (std::int64_t b = 0; b < s.b; ++b) {
            const double* gp = self.grad.plane(b, c);
            double* dp = gin.plane(b, c);
            for (std::int64_t i = 0; i < plane; ++i) dp[i] = k * gp[i];
          }
        }
        xn->accumulate(gin);
      }
      if (affine && self.parents[1]->requires_grad) {
        Tensor gg(1, s.c, 1, 1), gb(1, s.c, 1, 1);
        for (std::int64_t c = 0; c < s.c; ++c) {
          const double inv = 1.0 / std::sqrt(rv.data()[c] + eps);
          double sg = 0.0, sb = 0.0;
          for (std::int64_t b = 0; b < s.b; ++b) {
            const double* gp = self.grad.plane(b, c);
            const double* xp = self.parents[0]->value.plane(b, c);
            for (std::int64_t i = 0; i < plane; ++i) {
              sg += gp[i] * (xp[i] - rm.data()[c]) * inv;
              sb += gp[i];
            }
          }
          gg.data()[c] = sg;
          gb.data()[c] = sb;
        }
        self.parents[1]->accumulate(gg);
        self.parents[2]->accumulate(gb);
      }
    });
  }

  // Training mode: normalize with biased batch statistics.
  Tensor out(s);
  auto mean_c = std::make_shared<std::vector<double>>(static_cast<std::size_t>(s.c));
  auto inv_std_c = std::make_shared<std::vector<double>>(static_cast<std::size_t>(s.c));
#pragma omp parallel for schedule(static) if (s.numel() > (1 << 14))
  for (std::int64_t c = 0; c < s.c; ++c) {
    double m = 0.0;
    for (std::int64_t b = 0; b < s.b; ++b) {
      const double* xp = x.value().plane(b, c);
      for (std::int64_t i = 0; i < plane; ++i) m += xp[i];
    }
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::int64_t b = 0; b < s.b; ++b) {
      const double* xp = x.value().plane(b, c);
      for (std::int64_t i = 0; i < plane; ++i) v += (xp[i] - m) * (xp[i] - m);
    }
    v /= static_cast<double>(n);
    (*mean_c)[static_cast<std::size_t>(c)] = m;
    (*inv_std_c)[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(v + eps_);
    const double g = affine_ ? gamma.value().data()[c] : 1.0;
    const double bt = affine_ ? beta.value().data()[c] : 0.0;
    for (std::int64_t b = 0; b < s.b; ++b) {
      const double* xp = x.value().plane(b, c);
      double* op = out.plane(b, c);
      for (std::int64_t i = 0; i < plane; ++i)
        op[i] = g * (xp[i] - m) * (*inv_std_c)[static_cast<std::size_t>(c)] + bt;
    }
    // running estimates use the unbiased variance
    const double unbiased = n > 1 ? v * static_cast<double>(n) / static_cast<double>(n - 1) : v;
    running_mean.data()[c] = (1.0 - momentum_) * running_mean.data()[c] + momentum_ * m;
    running_var.data()[c] = (1.0 - momentum_) * running_var.data()[c] + momentum_ * unbiased;
  }

  std::vector<VarNodePtr> parents{x.node()};
  if (affine_) {
    parents.push_back(gamma.node());
    parents.push_back(beta.node());
  }
  const bool affine = affine_;
  return detail::make_node(std::move(out), std::move(parents),
                           [s, plane, n, affine, mean_c, inv_std_c](VarNode& self) {
    const auto& xn = self.parents[0];
    Tensor gg(1, s.c, 1, 1), gb(1, s.c, 1, 1);
    Tensor gin;
    if (xn->requires_grad) gin = Tensor(s);
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double m = (*mean_c)[static_cast<std::size_t>(c)];
      const double inv = (*inv_std_c)[static_cast<std::size_t>(c)];
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::int64_t b = 0; b < s.b; ++b) {
        const double* gp = self.grad.plane(b, c);
        const double* xp = xn->value.plane(b, c);
        for (std::int64_t i = 0; i < plane; ++i) {
          sum_g += gp[i];
          sum_gx += gp[i] * (xp[i] - m) * inv;
        }
      }
      gg.data()[c] = sum_gx;
      gb.data()[c] = sum_g;
      if (xn->requires_grad) {
        const double g = affine ? self.parents[1]->value.data()[c] : 1.0;
        const double k = g * inv;
        const double mg = sum_g / static_cast<double>(n);
        const double mgx = sum_gx / static_cast<double>(n);
        for (std::int64_t b = 0; b < s.b; ++b) {
          const double* gp = self.grad.plane(b, c);
          const double* xp = xn->value.plane(b, c);
          double* dp = gin.plane(b, c);
          for (std::int64_t i = 0; i < plane; ++i)
            dp[i] = k * (gp[i] - mg - (xp[i] - m) * inv * mgx);
        }
      }
    }
    if (xn->requires_grad) xn->accumulate(gin);
    if (affine && self.parents[1]->requires_grad) {
      self.parents[1]->accumulate(gg);
      self.parents[2]->accumulate(gb);
    }
  });
}

Shape4 BatchNorm2d::describe(Shape4 in, const std::string& prefix, LayerTable& table) const {
  table.add(prefix, "batchnorm", in, affine_ ? 2 * channels_ : 0, in.numel());
  return in;
}

Variable apply_act(const Variable& x, Act act) {
  switch (act) {
    case Act::none:
      return x;
    case Act::relu:
      return ops::relu(x);
    case Act::swish:
      return ops::swish(x);
    case Act::sigmoid:
      return ops::sigmoid(x);
  }
  return x;
}

ConvBlock::ConvBlock(std::mt19937& rng, int in_ch, int out_ch, int kernel, int stride, int pad,
                     int dilation, Act act_, bool with_bn, bool conv_bias)
    : conv(rng, in_ch, out_ch, kernel, stride, pad, dilation, 1, conv_bias), act(act_) {
  register_child("conv", &conv);
  if (with_bn) {
    bn = std::make_unique<BatchNorm2d>(out_ch);
    register_child("bn", bn.get());
  }
}

Variable ConvBlock::forward(const Variable& x) {
  Variable y = conv.forward(x);
  if (bn) y = bn->forward(y);
  return apply_act(y, act);
}

Shape4 ConvBlock::describe(Shape4 in, const std::string& prefix, LayerTable& table) const {
  Shape4 out = conv.describe(in, join_key(prefix, "conv"), table);
  if (bn) out = bn->describe(out, join_key(prefix, "bn"), table);
  if (act != Act::none) table.add(join_key(prefix, "act"), "activation", out, 0, eltwise_macs(out));
  return out;
}

}  // namespace hetnet
