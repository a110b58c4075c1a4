#include "hetnet/runconfig.hpp"

#include <fstream>

#include <json.hpp>

namespace hetnet {

using nlohmann::json;

namespace {

json backbone_to_json(const BackboneConfig& c) {
  json j;
  j["variant"] = to_string(c.variant);
  j["stage_channels"] = c.stage_channels;
  j["stage_strides"] = c.stage_strides;
  if (c.pretrained_weights_path) j["pretrained_weights_path"] = *c.pretrained_weights_path;
  return j;
}

void backbone_apply(BackboneConfig& c, const json& j) {
  if (j.contains("variant")) c.variant = backbone_variant_from_string(j["variant"]);
  if (j.contains("stage_channels")) {
    auto v = j["stage_channels"].get<std::vector<int>>();
    if (v.size() != 5) throw ConfigError("backbone.stage_channels must have exactly 5 entries");
    std::copy(v.begin(), v.end(), c.stage_channels.begin());
  }
  if (j.contains("stage_strides")) {
    auto v = j["stage_strides"].get<std::vector<int>>();
    if (v.size() != 5) throw ConfigError("backbone.stage_strides must have exactly 5 entries");
    std::copy(v.begin(), v.end(), c.stage_strides.begin());
  }
  if (j.contains("pretrained_weights_path"))
    c.pretrained_weights_path = j["pretrained_weights_path"].get<std::string>();
}

json network_to_json(const NetworkConfig& c) {
  json j;
  j["backbone"] = backbone_to_json(c.backbone);
  std::vector<std::string> heads;
  for (HeadKind k : c.head_assignment) heads.emplace_back(to_string(k));
  j["head_assignment"] = heads;
  j["use_global_extractor"] = c.use_global_extractor;
  j["fusion_width"] = c.fusion_width;
  j["rotation_strategy"] = to_string(c.rotation_strategy);
  j["deep_supervision"] = c.deep_supervision;
  j["edge_supervision"] = c.edge_supervision;
  j["share_icfe_weights"] = c.share_icfe_weights;
  j["fusion_combine"] = to_string(c.fusion_combine);
  j["icfe_reduction"] = c.icfe_reduction;
  return j;
}

void network_apply(NetworkConfig& c, const json& j) {
  if (j.contains("preset")) {
    const std::string p = j["preset"];
    if (p == "canonical_full")
      c = NetworkConfig::canonical_full();
    else if (p == "canonical_tiny")
      c = NetworkConfig::canonical_tiny();
    else
      throw ConfigError("unknown network preset '" + p + "' (canonical_full|canonical_tiny)");
  }
  if (j.contains("backbone")) backbone_apply(c.backbone, j["backbone"]);
  if (j.contains("head_assignment")) {
    auto v = j["head_assignment"].get<std::vector<std::string>>();
    if (v.size() != 5) throw ConfigError("network.head_assignment must have exactly 5 entries");
    for (std::size_t i = 0; i < 5; ++i) c.head_assignment[i] = head_kind_from_string(v[i]);
  }
  if (j.contains("use_global_extractor")) c.use_global_extractor = j["use_global_extractor"];
  if (j.contains("fusion_width")) c.fusion_width = j["fusion_width"];
  if (j.contains("rotation_strategy"))
    c.rotation_strategy = rotation_strategy_from_string(j["rotation_strategy"]);
  if (j.contains("deep_supervision")) c.deep_supervision = j["deep_supervision"];
  if (j.contains("edge_supervision")) c.edge_supervision = j["edge_supervision"];
  if (j.contains("share_icfe_weights")) c.share_icfe_weights = j["share_icfe_weights"];
  if (j.contains("fusion_combine")) c.fusion_combine = fusion_combine_from_string(j["fusion_combine"]);
  if (j.contains("icfe_reduction")) c.icfe_reduction = j["icfe_reduction"];
}

json optimizer_to_json(const OptimizerConfig& c) {
  return json{{"momentum", c.momentum},       {"weight_decay", c.weight_decay},
              {"max_lr", c.max_lr},           {"schedule", to_string(c.schedule)},
              {"warmup_frac", c.warmup_frac}, {"poly_power", c.poly_power}};
}

void optimizer_apply(OptimizerConfig& c, const json& j) {
  if (j.contains("momentum")) c.momentum = j["momentum"];
  if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"];
  if (j.contains("max_lr")) c.max_lr = j["max_lr"];
  if (j.contains("schedule")) c.schedule = lr_schedule_from_string(j["schedule"]);
  if (j.contains("warmup_frac")) c.warmup_frac = j["warmup_frac"];
  if (j.contains("poly_power")) c.poly_power = j["poly_power"];
}

json augment_to_json(const AugmentationConfig& c) {
  return json{{"scales", c.scales},
              {"base_size", c.base_size},
              {"crop_size", c.crop_size},
              {"hflip_prob", c.hflip_prob}};
}

void augment_apply(AugmentationConfig& c, const json& j) {
  if (j.contains("scales")) c.scales = j["scales"].get<std::vector<double>>();
  if (j.contains("base_size")) c.base_size = j["base_size"];
  if (j.contains("crop_size")) c.crop_size = j["crop_size"];
  if (j.contains("hflip_prob")) c.hflip_prob = j["hflip_prob"];
}

}  // namespace

void RunConfig::validate() const {
  network.validate();
  optimizer.validate();
  augment.validate();
  if (batch_size <= 0) throw ConfigError("run: batch_size must be positive");
  if (epochs < 0) throw ConfigError("run: epochs must be >= 0");
  if (checkpoint_interval < 0) throw ConfigError("run: checkpoint_interval must be >= 0");
  if (inference_size <= 0) throw ConfigError("run: inference_size must be positive");
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["network"] = network_to_json(cfg.network);
  j["optimizer"] = optimizer_to_json(cfg.optimizer);
  j["augment"] = augment_to_json(cfg.augment);
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["dataset_root"] = cfg.dataset_root;
  j["output_dir"] = cfg.output_dir;
  j["checkpoint_interval"] = cfg.checkpoint_interval;
  j["inference_size"] = cfg.inference_size;
  return j.dump(2);
}

void run_config_apply_json(RunConfig& cfg, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    if (j.contains("network")) network_apply(cfg.network, j["network"]);
    if (j.contains("optimizer")) optimizer_apply(cfg.optimizer, j["optimizer"]);
    if (j.contains("augment")) augment_apply(cfg.augment, j["augment"]);
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"];
    if (j.contains("epochs")) cfg.epochs = j["epochs"];
    if (j.contains("seed")) cfg.seed = j["seed"];
    if (j.contains("dataset_root")) cfg.dataset_root = j["dataset_root"];
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"];
    if (j.contains("checkpoint_interval")) cfg.checkpoint_interval = j["checkpoint_interval"];
    if (j.contains("inference_size")) cfg.inference_size = j["inference_size"];
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad field type: ") + e.what());
  }
}

RunConfig run_config_from_json(const std::string& json_text) {
  RunConfig cfg;
  run_config_apply_json(cfg, json_text);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return run_config_from_json(text);
}

std::string network_config_to_json(const NetworkConfig& cfg) { return network_to_json(cfg).dump(2); }

NetworkConfig network_config_from_json(const std::string& json_text) {
  NetworkConfig cfg;
  try {
    network_apply(cfg, json::parse(json_text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("network config: invalid JSON: ") + e.what());
  }
  return cfg;
}

}  // namespace hetnet
