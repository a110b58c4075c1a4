#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>

#include "hetnet/nn.hpp"

namespace hetnet {

enum class BackboneVariant { full, tiny };

struct BackboneConfig {
  BackboneVariant variant = BackboneVariant::tiny;
  std::array<int, 5> stage_channels{16, 32, 64, 64, 64};
  std::array<int, 5> stage_strides{2, 4, 8, 16, 32};
  std::optional<std::string> pretrained_weights_path;

  void validate() const;
  static BackboneConfig tiny(std::array<int, 5> channels = {16, 32, 64, 64, 64});
  static BackboneConfig full();
};

using FeaturePyramid = std::array<Variable, 5>;

/// Five-stage feature extractor. Stage i produces stage_channels[i] channels
/// at 1/stage_strides[i] of the input resolution.
class Backbone : public Module {
 public:
  explicit Backbone(BackboneConfig config) : config_(std::move(config)) {}

  const BackboneConfig& config() const { return config_; }

  /// images: (B, 3, H, W) with H and W divisible by every stage stride.
  FeaturePyramid extract(const Variable& images);

  /// Analytic per-stage output shapes for a given input; no weights touched.
  std::array<Shape4, 5> stage_shapes(Shape4 input) const;

  virtual std::array<Shape4, 5> describe_stages(Shape4 in, const std::string& prefix,
                                                LayerTable& table) const = 0;

 protected:
  virtual FeaturePyramid run(const Variable& images) = 0;
  void check_input(const Shape4& s) const;

  BackboneConfig config_;
};

/// Builds the configured feature extractor and, when a checkpoint path is
/// set, loads and shape-validates the weights.
std::unique_ptr<Backbone> build_backbone(const BackboneConfig& config, std::mt19937& rng);

const char* to_string(BackboneVariant v);
BackboneVariant backbone_variant_from_string(const std::string& s);

}  // namespace hetnet
