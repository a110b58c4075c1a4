#pragma once

#include <string>

#include "hetnet/tensor.hpp"

namespace hetnet {

/// 8-bit image file -> (1, 3, H, W) RGB tensor in [0, 1].
Tensor load_image_rgb(const std::string& path);

struct MaskLoadResult {
  Tensor mask;          // (1, 1, H, W), strictly {0, 1}
  bool was_binary = true;  // false if gray values had to be binarized at 128
};

MaskLoadResult load_mask(const std::string& path);

/// Writes a single-channel tensor in [0, 1] as an 8-bit grayscale PNG.
void save_gray_png(const std::string& path, const Tensor& map);

/// Writes a (1, 3, H, W) tensor in [0, 1] as an 8-bit color PNG.
void save_rgb_png(const std::string& path, const Tensor& image);

}  // namespace hetnet
