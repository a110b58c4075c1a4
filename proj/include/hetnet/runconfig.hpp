#pragma once

#include <string>

#include "hetnet/assembly.hpp"
#include "hetnet/datapipe.hpp"
#include "hetnet/optim.hpp"

namespace hetnet {

/// Everything a training/evaluation run needs; serializes to a single JSON
/// document whose key paths mirror the fields. Sparse documents overlay onto
/// defaults, so CLI flags can override file values.
struct RunConfig {
  NetworkConfig network = NetworkConfig::canonical_tiny();
  OptimizerConfig optimizer;
  AugmentationConfig augment{.scales = {1.0, 1.25}, .base_size = 64, .crop_size = 64};
  int batch_size = 12;
  int epochs = 150;
  unsigned seed = 1;
  std::string dataset_root;
  std::string output_dir = "runs/default";
  int checkpoint_interval = 25;  // epochs between periodic checkpoints; 0 disables
  int inference_size = 64;

  void validate() const;
};

std::string run_config_to_json(const RunConfig& cfg);
/// Overlays the (possibly sparse) JSON document onto `cfg`.
void run_config_apply_json(RunConfig& cfg, const std::string& json_text);
RunConfig run_config_from_json(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

std::string network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const std::string& json_text);

}  // namespace hetnet
