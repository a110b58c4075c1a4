#pragma once

#include <string>

#include "hetnet/assembly.hpp"

namespace hetnet {

struct EfficiencyReport {
  double params_millions = 0.0;
  double flops_gmac = 0.0;  // multiply-accumulates / 1e9 at input_size
  double fps = 0.0;
  std::int64_t input_h = 0, input_w = 0;
  int warmup_iters = 0;
  int timed_iters = 0;
  std::string device;

  std::string csv_row(const std::string& label) const;
  static std::string csv_header();
};

/// Trainable parameter count (mode-independent), in raw units.
std::int64_t count_params(HetNet& net);

/// Analytic multiply-accumulate count for one forward at (h, w). Convolutions
/// contribute out_elems * C_in/groups * k*k; BatchNorm, activations and
/// elementwise ops one per element; pooling one per covered element; bilinear
/// resampling four per output element.
std::int64_t count_macs(const HetNet& net, std::int64_t h, std::int64_t w);

struct BenchOptions {
  int warmup_iters = 20;
  int timed_iters = 100;
  unsigned seed = 7;
  std::string lock_file = "/tmp/hetnet_bench.lock";  // advisory; empty disables
};

/// Wall-clock frames/s for eval-mode batch-1 forwards on a fixed random input.
/// Takes an advisory file lock so concurrent profilers do not interleave.
double benchmark_fps(HetNet& net, std::int64_t h, std::int64_t w, const BenchOptions& opts = {});

EfficiencyReport profile(HetNet& net, std::int64_t h, std::int64_t w,
                         const BenchOptions& opts = {});

/// Layer-by-layer dump of the describe table.
std::string format_layer_table(const LayerTable& table);

}  // namespace hetnet
