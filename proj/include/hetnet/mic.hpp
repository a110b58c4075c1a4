#pragma once

#include "hetnet/nn.hpp"

namespace hetnet {

/// Intensity-based contrasted feature extractor: pools the input along each
/// spatial axis, encodes both 1D profiles jointly, and gates the input with
/// per-row and per-column sigmoid attention.
class Icfe : public Module {
 public:
  Icfe(std::mt19937& rng, int in_channels, int reduction = 16, bool conv_bias = true);

  Variable forward(const Variable& x);

  struct Detail {
    Variable attn_h;  // (B, C, H, 1), values in (0, 1)
    Variable attn_w;  // (B, C, 1, W)
    Variable out;
  };
  Detail forward_detail(const Variable& x);

  Shape4 describe(Shape4 in, const std::string& prefix, LayerTable& table) const;

  int in_channels() const { return in_channels_; }
  int mid_channels() const { return mid_channels_; }

  ConvBlock joint;   // 1x1 conv + BatchNorm + Swish on the concatenated profiles
  Conv2d conv_h;     // 1x1, mid -> in
  Conv2d conv_w;     // 1x1, mid -> in

 private:
  int in_channels_;
  int mid_channels_;
};

enum class RotationStrategy { single, dual_same, tri, quad, mic };

const char* to_string(RotationStrategy s);
RotationStrategy rotation_strategy_from_string(const std::string& s);
/// Quarter-turn count per extractor for a strategy (e.g. mic -> {0, 1}).
std::vector<int> strategy_orientations(RotationStrategy s);

/// Multi-orientation intensity-based contrasted module. Runs an ICFE per
/// orientation on the 1x1-projected input, rotates each result back,
/// multiplies them, and finishes with 3x3 + 1x1 conv/bn/relu blocks.
class Mic : public Module {
 public:
  Mic(std::mt19937& rng, int in_channels, int width, RotationStrategy strategy,
      bool share_icfe_weights = false, int icfe_reduction = 16);

  Variable forward(const Variable& x);

  struct Detail {
    std::vector<Variable> factors;  // rotated-back per-orientation ICFE outputs
    Variable product;
    Variable out;
  };
  Detail forward_detail(const Variable& x);

  Shape4 describe(Shape4 in, const std::string& prefix, LayerTable& table) const;

  RotationStrategy strategy() const { return strategy_; }
  std::size_t icfe_count() const { return icfes_.size(); }
  Icfe& icfe(std::size_t i) { return *icfes_[i]; }

  Conv2d proj;  // 1x1 input projection to the module width

 private:
  Icfe& icfe_for(std::size_t orientation_index) {
    return share_weights_ ? *icfes_[0] : *icfes_[orientation_index];
  }

  RotationStrategy strategy_;
  bool share_weights_;
  std::vector<int> orientations_;
  std::vector<std::unique_ptr<Icfe>> icfes_;
  std::unique_ptr<ConvBlock> out3_;
  std::unique_ptr<ConvBlock> out1_;
};

}  // namespace hetnet
