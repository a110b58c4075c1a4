#pragma once

#include <random>
#include <string>
#include <vector>

#include "hetnet/tensor.hpp"

namespace hetnet {

struct SampleRecord {
  Tensor image;  // (1, 3, H, W) in [0, 1]
  Tensor mask;   // (1, 1, H, W) in {0, 1}
  Tensor edge;   // (1, 1, H, W) in {0, 1}, derived from the mask
  std::string id;
};

enum class EdgeBorder {
  background,  // outside the image counts as non-mask; a full mask grows a border ring
  ignore,      // erosion only considers in-bounds pixels; a full mask has no edge
};

/// Morphological gradient (dilation minus erosion) with a square structuring
/// element of side 2*radius + 1.
Tensor derive_edge(const Tensor& mask, int radius = 2, EdgeBorder border = EdgeBorder::background);

enum class Split { train, test };
const char* to_string(Split s);
Split split_from_string(const std::string& s);

/// Loads `<root>/<split>/image/*` + `<root>/<split>/mask/*`, matched by stem
/// (extension-insensitive), ordered by id. Unmatched files raise InputError
/// listing the orphans; non-binary masks are binarized at 128 with a warning.
std::vector<SampleRecord> load_dataset(const std::string& root, Split split, int edge_radius = 2);

/// Writes records in the canonical on-disk layout (PNG images and masks).
void write_dataset(const std::vector<SampleRecord>& records, const std::string& root, Split split);

struct AugmentationConfig {
  std::vector<double> scales{0.75, 1.0, 1.25};
  int base_size = 352;
  int crop_size = 256;
  double hflip_prob = 0.5;

  void validate() const;
};

struct AugTransform {
  std::int64_t scaled_h = 0, scaled_w = 0;
  std::int64_t crop_y = 0, crop_x = 0;
  std::int64_t crop_h = 0, crop_w = 0;
  bool flipped = false;
};

struct AugmentResult {
  SampleRecord record;
  AugTransform transform;
};

/// Scale (image bilinear, mask/edge nearest), random crop, random horizontal
/// flip; one geometric transform applied to all three maps. Deterministic for
/// a given rng state.
AugmentResult augment_logged(const SampleRecord& rec, const AugmentationConfig& config,
                             std::mt19937& rng);
SampleRecord augment(const SampleRecord& rec, const AugmentationConfig& config, std::mt19937& rng);

/// Re-applies a logged transform to a raw map (nearest resampling).
Tensor apply_transform_nearest(const Tensor& map, const AugTransform& t);

/// Procedural mirror scenes: colored background shapes plus one rectangular
/// "mirror" holding a horizontally flipped, brightness-scaled copy of another
/// region, surrounded by a 2-pixel bright frame. Mask = rectangle interior.
std::vector<SampleRecord> generate_synthetic(int n, int size, unsigned seed, int edge_radius = 2);

/// Sub-stream seed for (seed, epoch, index); keeps batches worker-independent.
std::uint32_t derive_seed(unsigned seed, std::uint64_t epoch, std::uint64_t index);

struct Batch {
  Tensor images;  // (B, 3, H, W)
  Tensor masks;   // (B, 1, H, W)
  Tensor edges;   // (B, 1, H, W)
};

Batch make_batch(const std::vector<SampleRecord>& records, const std::vector<std::size_t>& idx);

}  // namespace hetnet
