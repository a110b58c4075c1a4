#pragma once

#include "hetnet/nn.hpp"

namespace hetnet {

/// Composition law for stacked convolutions: rf' = rf + dilation*(k-1)*jump.
struct RfConv {
  int kernel = 1;
  int dilation = 1;
  int stride = 1;
};
int receptive_field(const std::vector<RfConv>& chain);

/// Reflection semantic logical module: four parallel branches with growing
/// receptive fields (1x1; 1x1-7x7-dilated 3x3; 1x1-7x7-7x7-dilated 3x3; and a
/// 1x1 residual path), merged by a 3x3 conv over the concatenated first three
/// and joined residually with the fourth.
class Rsl : public Module {
 public:
  Rsl(std::mt19937& rng, int in_channels, int out_channels);

  Variable forward(const Variable& x);
  Shape4 describe(Shape4 in, const std::string& prefix, LayerTable& table) const;

  /// Analytic receptive-field size of each branch.
  std::vector<int> receptive_fields() const;

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }

  // branch1: conv1x1 + bn
  Conv2d b1_conv;
  BatchNorm2d b1_bn;
  // branch2: bconv1x1, bconv7x7 p3, conv3x3 p7 d7 + bn
  ConvBlock b2_c1;
  ConvBlock b2_c2;
  Conv2d b2_c3;
  BatchNorm2d b2_bn;
  // branch3: bconv1x1, bconv7x7 p3, bconv7x7 p3, conv3x3 p7 d7 + bn
  ConvBlock b3_c1;
  ConvBlock b3_c2;
  ConvBlock b3_c3;
  Conv2d b3_c4;
  BatchNorm2d b3_bn;
  // branch4 (residual): conv1x1 + bn
  Conv2d b4_conv;
  BatchNorm2d b4_bn;
  // merge over concat(b1, b2, b3)
  Conv2d merge_conv;
  BatchNorm2d merge_bn;

 private:
  int in_channels_;
  int out_channels_;
};

}  // namespace hetnet
