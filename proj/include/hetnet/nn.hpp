#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hetnet/autograd.hpp"

namespace hetnet {

/// One row of the analytic layer table used by `describe` and the MAC counter.
struct LayerInfo {
  std::string name;
  std::string kind;
  Shape4 out{};
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

struct LayerTable {
  std::vector<LayerInfo> rows;
  void add(std::string name, std::string kind, Shape4 out, std::int64_t params, std::int64_t macs) {
    rows.push_back({std::move(name), std::move(kind), out, params, macs});
  }
  std::int64_t total_params() const;
  std::int64_t total_macs() const;
};

using StateFn = std::function<void(const std::string& key, Tensor& value, bool trainable)>;
using ParamFn = std::function<void(const std::string& key, Variable& param)>;

/// Base for every network component. Children, parameters and buffers are
/// registered at construction time; state walking, train/eval switching and
/// checkpoint IO all ride on that registry.
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  void set_train(bool on);
  bool training() const { return training_; }

  /// Visits all parameters and buffers depth-first with dotted key names.
  void for_each_state(const std::string& prefix, const StateFn& fn);
  /// Visits trainable parameters only.
  void for_each_param(const std::string& prefix, const ParamFn& fn);

  std::int64_t num_trainable_params();

 protected:
  void register_param(std::string name, Variable v);
  void register_buffer(std::string name, Tensor* t);
  void register_child(std::string name, Module* m);
  virtual void on_set_train(bool) {}

  std::vector<std::pair<std::string, Variable>> params_;
  std::vector<std::pair<std::string, Tensor*>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;

 private:
  bool training_ = true;
};

std::string join_key(const std::string& prefix, const std::string& name);

/// 2D convolution layer; weights use Kaiming-normal fan-in init.
class Conv2d : public Module {
 public:
  Conv2d(std::mt19937& rng, int in_ch, int out_ch, int kernel, int stride = 1, int pad = 0,
         int dilation = 1, int groups = 1, bool bias = true);

  Variable forward(const Variable& x);
  Shape4 describe(Shape4 in, const std::string& prefix, LayerTable& table) const;
  std::int64_t param_count() const;

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }
  const ops::ConvSpec& spec() const { return spec_; }

  Variable weight;
  Variable bias;

 private:
  int in_ch_, out_ch_;
  ops::ConvSpec spec_;
};

/// Batch normalization over (batch, height, width) per channel.
/// Training mode normalizes with batch statistics and updates running
/// estimates (momentum 0.1); eval mode applies the frozen running statistics.
class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(int channels, bool affine = true, double eps = 1e-5,
                       double momentum = 0.1);

  Variable forward(const Variable& x);
  Shape4 describe(Shape4 in, const std::string& prefix, LayerTable& table) const;

  int channels() const { return channels_; }

  Variable gamma;
  Variable beta;
  Tensor running_mean;
  Tensor running_var;

 private:
  int channels_;
  bool affine_;
  double eps_;
  double momentum_;
};

enum class Act { none, relu, swish, sigmoid };

Variable apply_act(const Variable& x, Act act);

/// conv -> optional BatchNorm -> optional activation.
class ConvBlock : public Module {
 public:
  ConvBlock(std::mt19937& rng, int in_ch, int out_ch, int kernel, int stride, int pad,
            int dilation, Act act, bool with_bn = true, bool conv_bias = false);

  Variable forward(const Variable& x);
  Shape4 describe(Shape4 in, const std::string& prefix, LayerTable& table) const;

  Conv2d conv;
  std::unique_ptr<BatchNorm2d> bn;
  Act act;
};

/// MACs for one elementwise pass over `s` (activations, products, sums).
inline std::int64_t eltwise_macs(Shape4 s) { return s.numel(); }

}  // namespace hetnet
