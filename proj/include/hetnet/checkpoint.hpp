#pragma once

#include <map>
#include <string>
#include <vector>

#include "hetnet/nn.hpp"

namespace hetnet {

// Single-file key -> array map. Keys follow the module registry naming
// (`backbone.stage1.block0.conv.weight`, `mic.stage2.icfe0.joint.conv.weight`, ...).
// Little-endian doubles; string metadata entries carry the serialized config.

void save_checkpoint(const std::string& path, Module& root,
                     const std::map<std::string, std::string>& meta = {},
                     const std::string& key_prefix = "");

/// Loads every state entry of `root` (keys prefixed with `key_prefix` in the
/// file). Missing keys and shape mismatches raise ConfigError naming the
/// first offending layer.
void load_checkpoint(const std::string& path, Module& root, const std::string& key_prefix = "");

std::map<std::string, std::string> read_checkpoint_meta(const std::string& path);
std::vector<std::string> checkpoint_keys(const std::string& path);

}  // namespace hetnet
