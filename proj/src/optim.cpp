#include "hetnet/optim.hpp"

#include <cmath>

namespace hetnet {

const char* to_string(LrSchedule s) {
  switch (s) {
    case LrSchedule::poly:
      return "poly";
    case LrSchedule::cosine:
      return "cosine";
    case LrSchedule::constant:
      return "constant";
  }
  return "poly";
}

LrSchedule lr_schedule_from_string(const std::string& s) {
  if (s == "poly") return LrSchedule::poly;
  if (s == "cosine") return LrSchedule::cosine;
  if (s == "constant") return LrSchedule::constant;
  throw ConfigError("unknown lr schedule '" + s + "' (poly|cosine|constant)");
}

void OptimizerConfig::validate() const {
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("optimizer: momentum outside [0,1)");
  if (weight_decay < 0.0) throw ConfigError("optimizer: negative weight decay");
  if (max_lr <= 0.0) throw ConfigError("optimizer: max_lr must be positive");
  if (warmup_frac < 0.0 || warmup_frac >= 1.0)
    throw ConfigError("optimizer: warmup fraction outside [0,1)");
}

double lr_at(const OptimizerConfig& cfg, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0) return cfg.max_lr;
  const double t = static_cast<double>(step);
  const double total = static_cast<double>(total_steps);
  const double warmup = cfg.warmup_frac * total;
  if (warmup >= 1.0 && t < warmup) return cfg.max_lr * (t + 1.0) / warmup;
  switch (cfg.schedule) {
    case LrSchedule::constant:
      return cfg.max_lr;
    case LrSchedule::cosine: {
      const double p = (t - warmup) / std::max(1.0, total - warmup);
      return cfg.max_lr * 0.5 * (1.0 + std::cos(p * M_PI));
    }
    case LrSchedule::poly: {
      const double p = (t - warmup) / std::max(1.0, total - warmup);
      return cfg.max_lr * std::pow(1.0 - p, cfg.poly_power);
    }
  }
  return cfg.max_lr;
}

Sgd::Sgd(Module& root, OptimizerConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  root.for_each_param("", [&](const std::string&, Variable& v) {
    params_.push_back(v);
    velocity_.emplace_back(v.shape());
  });
}

void Sgd::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Variable& p = params_[i];
    if (!p.has_grad()) continue;
    Tensor& v = velocity_[i];
    Tensor& w = p.mutable_value();
    const Tensor& g = p.grad();
    for (std::int64_t j = 0; j < w.numel(); ++j) {
      const double grad = g.data()[j] + cfg_.weight_decay * w.data()[j];
      v.data()[j] = cfg_.momentum * v.data()[j] + grad;
      w.data()[j] -= lr * v.data()[j];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace hetnet
