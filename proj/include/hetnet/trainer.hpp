#pragma once

#include <optional>

#include "hetnet/losses.hpp"
#include "hetnet/metrics.hpp"
#include "hetnet/runconfig.hpp"

namespace hetnet {

struct TrainResult {
  std::string run_dir;
  std::string final_checkpoint;
  std::string best_checkpoint;
  std::optional<MetricReport> final_metrics;  // test split, when present
  double first_epoch_loss = 0.0;
  double last_epoch_loss = 0.0;
  std::int64_t steps = 0;
};

/// Full training loop. Writes config.resolved, logs/loss.csv,
/// logs/metrics.csv and checkpoints/ under config.output_dir. Deterministic
/// for a fixed config and seed.
TrainResult train_run(const RunConfig& config, bool verbose = true);

/// Rounds to the nearest positive multiple of 32 (warns when it changes).
int snap_to_stride(int size);

/// Inference protocol: resize to `inference_size`, one forward, sigmoid, and
/// bilinear resize of the probability map back to the native resolution.
Tensor predict_probability(HetNet& net, const Tensor& image, int inference_size);

MetricReport evaluate_records(HetNet& net, const std::vector<SampleRecord>& records,
                              int inference_size, EvalOptions opts = {});

/// Rebuilds the network stored in a checkpoint and loads its weights.
std::unique_ptr<HetNet> load_network(const std::string& checkpoint_path);
/// Run configuration embedded in a checkpoint, when present.
std::optional<RunConfig> checkpoint_run_config(const std::string& checkpoint_path);

MetricReport evaluate_checkpoint(const std::string& checkpoint_path, const std::string& dataset_root,
                                 Split split, std::optional<int> inference_size = {},
                                 EvalOptions opts = {});

struct PredictStats {
  int written = 0;
  int failed = 0;
};

/// Writes `<stem>_prob.png` and `<stem>_mask.png` (threshold 0.5 on the saved
/// 8-bit probabilities) per readable input image.
PredictStats predict_to_dir(HetNet& net, const std::vector<std::string>& image_paths,
                            const std::string& out_dir, int inference_size);

}  // namespace hetnet
