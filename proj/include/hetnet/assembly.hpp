#pragma once

#include <optional>

#include "hetnet/backbone.hpp"
#include "hetnet/mic.hpp"
#include "hetnet/rsl.hpp"

namespace hetnet {

enum class HeadKind { mic, rsl, icfe_only, identity };
enum class FusionCombine { sum, concat };

const char* to_string(HeadKind k);
HeadKind head_kind_from_string(const std::string& s);
const char* to_string(FusionCombine c);
FusionCombine fusion_combine_from_string(const std::string& s);

/// Full architectural description: drives construction, checkpoint layout and
/// the analytic parameter/MAC accounting.
struct NetworkConfig {
  BackboneConfig backbone;
  std::array<HeadKind, 5> head_assignment{HeadKind::mic, HeadKind::mic, HeadKind::mic,
                                          HeadKind::rsl, HeadKind::rsl};
  bool use_global_extractor = true;
  int fusion_width = 64;
  RotationStrategy rotation_strategy = RotationStrategy::mic;
  bool deep_supervision = true;
  bool edge_supervision = true;
  bool share_icfe_weights = false;
  FusionCombine fusion_combine = FusionCombine::sum;
  int icfe_reduction = 16;

  void validate() const;

  static NetworkConfig canonical_full();
  static NetworkConfig canonical_tiny();
};

/// Pyramid-pooling global extractor: bins {1,2,3,6} (clamped to the input
/// size), a 1x1 conv/bn/relu per bin, bilinear upsampling back, concat with
/// the input and a 3x3 merge.
class GlobalExtractor : public Module {
 public:
  GlobalExtractor(std::mt19937& rng, int channels, std::vector<int> bins = {1, 2, 3, 6});

  Variable forward(const Variable& x);
  Shape4 describe(Shape4 in, const std::string& prefix, LayerTable& table) const;

  std::vector<ConvBlock*> bin_convs();

 private:
  std::vector<int> bins_;
  std::vector<std::unique_ptr<ConvBlock>> bin_convs_;
  std::unique_ptr<ConvBlock> merge_;
};

/// Cross aggregation of a low-level (higher resolution) and a high-level map:
/// the low side is gated by the upsampled high side, the high side by a
/// strided 3x3 conv of the low side; both interim maps are combined at the
/// low resolution through a 3x3 conv with BatchNorm and ReLU.
class CrossAggregate : public Module {
 public:
  CrossAggregate(std::mt19937& rng, int width, FusionCombine combine);

  Variable forward(const Variable& f_low, const Variable& f_high);
  Shape4 describe(Shape4 low, Shape4 high, const std::string& prefix, LayerTable& table) const;

  Conv2d down_conv;
  BatchNorm2d down_bn;
  std::unique_ptr<ConvBlock> merge;

 private:
  static std::int64_t resolution_ratio(const Shape4& low, const Shape4& high);
  FusionCombine combine_;
  int width_;
};

struct FusionGraphOutputs {
  std::array<Variable, 6> stage_features;  // f1..f6 (f6 undefined without the global extractor)
  Variable f21, f22, f23, f31;
  Variable main_output;                 // 1-channel logits at input resolution
  std::vector<Variable> aux_outputs;    // f21, f22, f23, f31 heads; empty unless deep supervision
  Variable edge_output;                 // 1-channel logits on f21; undefined unless edge supervision
};

enum class RunMode { train, eval };

/// The assembled network: backbone, per-stage heads, global extractor,
/// cross-aggregation fusion tree and output heads.
class HetNet : public Module {
 public:
  HetNet(const NetworkConfig& config, std::mt19937& rng);

  const NetworkConfig& config() const { return config_; }

  /// Graph evaluation without mode switching; safe to call concurrently on
  /// frozen weights in eval mode.
  FusionGraphOutputs run(const Variable& images);

  /// Convenience: switches train/eval (eval also disables the tape).
  FusionGraphOutputs forward(const Variable& images, RunMode mode);

  /// Eval-mode probability map at the input resolution.
  Tensor predict(const Tensor& images);

  LayerTable describe(std::int64_t input_h, std::int64_t input_w) const;

  Backbone& backbone() { return *backbone_; }

 private:
  Variable head_forward(int stage, const Variable& x);
  Shape4 head_describe(int stage, Shape4 in, LayerTable& table) const;

  NetworkConfig config_;
  std::unique_ptr<Backbone> backbone_;
  std::array<std::unique_ptr<Mic>, 5> mic_heads_;
  std::array<std::unique_ptr<Rsl>, 5> rsl_heads_;
  std::array<std::unique_ptr<ConvBlock>, 5> identity_heads_;
  std::unique_ptr<GlobalExtractor> ge_;
  std::unique_ptr<CrossAggregate> ca_f21_, ca_f22_, ca_f56_, ca_f23_, ca_f31_, ca_main_;
  std::unique_ptr<ConvBlock> predict_block_;
  std::unique_ptr<Conv2d> predict_conv_;
  std::array<std::unique_ptr<Conv2d>, 4> aux_convs_;
  std::unique_ptr<Conv2d> edge_conv_;
};

/// Builds the network with deterministically seeded initialization.
std::unique_ptr<HetNet> build_network(const NetworkConfig& config, unsigned seed);

/// Row labels and configs for the three ablation grids.
struct AblationGrid {
  std::string name;  // architecture | components | rotation
  std::vector<std::pair<std::string, NetworkConfig>> rows;
};

AblationGrid architecture_grid(const NetworkConfig& base);  // A_ba, A_a, A_b, HetNet
AblationGrid components_grid(const NetworkConfig& base);    // I..V, HetNet
AblationGrid rotation_grid(const NetworkConfig& base);      // ICFE..MIC
AblationGrid make_grid(const std::string& name, const NetworkConfig& base);

}  // namespace hetnet
