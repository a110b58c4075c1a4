#pragma once

#include <string>
#include <vector>

#include "hetnet/nn.hpp"

namespace hetnet {

enum class LrSchedule { poly, cosine, constant };

const char* to_string(LrSchedule s);
LrSchedule lr_schedule_from_string(const std::string& s);

struct OptimizerConfig {
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double max_lr = 1e-2;
  LrSchedule schedule = LrSchedule::poly;
  double warmup_frac = 0.05;  // linear warmup fraction of total steps
  double poly_power = 0.9;

  void validate() const;
};

/// Learning rate at `step` of `total_steps` under the configured schedule.
double lr_at(const OptimizerConfig& cfg, std::int64_t step, std::int64_t total_steps);

/// Plain SGD with momentum and L2 weight decay folded into the gradient.
class Sgd {
 public:
  Sgd(Module& root, OptimizerConfig cfg);

  void step(double lr);
  void zero_grad();
  std::size_t param_count() const { return params_.size(); }

 private:
  OptimizerConfig cfg_;
  std::vector<Variable> params_;
  std::vector<Tensor> velocity_;
};

}  // namespace hetnet
