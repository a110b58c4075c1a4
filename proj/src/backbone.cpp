#include "hetnet/backbone.hpp"

#include "hetnet/checkpoint.hpp"

namespace hetnet {

const char* to_string(BackboneVariant v) {
  return v == BackboneVariant::full ? "full" : "tiny";
}

BackboneVariant backbone_variant_from_string(const std::string& s) {
  if (s == "full") return BackboneVariant::full;
  if (s == "tiny") return BackboneVariant::tiny;
  throw ConfigError("unknown backbone variant '" + s + "'");
}

void BackboneConfig::validate() const {
  // arrays are fixed at 5 entries by type; check the numeric invariants
  for (int c : stage_channels)
    if (c <= 0) throw ConfigError("backbone: stage channels must be positive");
  int prev = 0;
  for (int s : stage_strides) {
    if (s <= prev) throw ConfigError("backbone: stage strides must be strictly increasing");
    prev = s;
  }
  if (stage_strides != std::array<int, 5>{2, 4, 8, 16, 32})
    throw ConfigError("backbone: both variants halve resolution per stage; strides must be 2,4,8,16,32");
  if (variant == BackboneVariant::full &&
      stage_channels != std::array<int, 5>{64, 256, 512, 1024, 2048})
    throw ConfigError("backbone: full variant has fixed stage channels 64,256,512,1024,2048");
}

BackboneConfig BackboneConfig::tiny(std::array<int, 5> channels) {
  BackboneConfig c;
  c.variant = BackboneVariant::tiny;
  c.stage_channels = channels;
  return c;
}

BackboneConfig BackboneConfig::full() {
  BackboneConfig c;
  c.variant = BackboneVariant::full;
  c.stage_channels = {64, 256, 512, 1024, 2048};
  return c;
}

void Backbone::check_input(const Shape4& s) const {
  if (s.c != 3) throw InputError("backbone: expected 3-channel input, got " + s.str());
  for (int st : config_.stage_strides) {
    if (s.h % st != 0 || s.w % st != 0)
      throw InputError("backbone: input " + s.str() + " must be divisible by stride " +
                       std::to_string(st));
  }
}

FeaturePyramid Backbone::extract(const Variable& images) {
  check_input(images.shape());
  return run(images);
}

std::array<Shape4, 5> Backbone::stage_shapes(Shape4 input) const {
  std::array<Shape4, 5> out;
  for (int i = 0; i < 5; ++i)
    out[static_cast<std::size_t>(i)] = {input.b, config_.stage_channels[static_cast<std::size_t>(i)],
                                        input.h / config_.stage_strides[static_cast<std::size_t>(i)],
                                        input.w / config_.stage_strides[static_cast<std::size_t>(i)]};
  return out;
}

namespace {

/// Desk-scale backbone: five stride-2 conv/bn/relu blocks.
class TinyBackbone final : public Backbone {
 public:
  TinyBackbone(BackboneConfig config, std::mt19937& rng) : Backbone(std::move(config)) {
    int in_ch = 3;
    for (int i = 0; i < 5; ++i) {
      const int out_ch = config_.stage_channels[static_cast<std::size_t>(i)];
      blocks_[static_cast<std::size_t>(i)] =
          std::make_unique<ConvBlock>(rng, in_ch, out_ch, 3, 2, 1, 1, Act::relu);
      register_child("stage" + std::to_string(i + 1) + ".block0",
                     blocks_[static_cast<std::size_t>(i)].get());
      in_ch = out_ch;
    }
  }

  std::array<Shape4, 5> describe_stages(Shape4 in, const std::string& prefix,
                                        LayerTable& table) const override {
    std::array<Shape4, 5> shapes;
    Shape4 cur = in;
    for (int i = 0; i < 5; ++i) {
      cur = blocks_[static_cast<std::size_t>(i)]->describe(
          cur, join_key(prefix, "stage" + std::to_string(i + 1) + ".block0"), table);
      shapes[static_cast<std::size_t>(i)] = cur;
    }
    return shapes;
  }

 protected:
  FeaturePyramid run(const Variable& images) override {
    FeaturePyramid out;
    Variable cur = images;
    for (int i = 0; i < 5; ++i) {
      cur = blocks_[static_cast<std::size_t>(i)]->forward(cur);
      out[static_cast<std::size_t>(i)] = cur;
    }
    return out;
  }

 private:
  std::array<std::unique_ptr<ConvBlock>, 5> blocks_;
};

/// Grouped-convolution bottleneck (cardinality 32), stride on the 3x3 conv.
class Bottleneck final : public Module {
 public:
  Bottleneck(std::mt19937& rng, int in_ch, int mid_ch, int out_ch, int stride, int groups)
      : conv1_(rng, in_ch, mid_ch, 1, 1, 0, 1, 1, false),
        bn1_(mid_ch),
        conv2_(rng, mid_ch, mid_ch, 3, stride, 1, 1, groups, false),
        bn2_(mid_ch),
        conv3_(rng, mid_ch, out_ch, 1, 1, 0, 1, 1, false),
        bn3_(out_ch) {
    register_child("conv1", &conv1_);
    register_child("bn1", &bn1_);
    register_child("conv2", &conv2_);
    register_child("bn2", &bn2_);
    register_child("conv3", &conv3_);
    register_child("bn3", &bn3_);
    if (stride != 1 || in_ch != out_ch) {
      down_conv_ = std::make_unique<Conv2d>(rng, in_ch, out_ch, 1, stride, 0, 1, 1, false);
      down_bn_ = std::make_unique<BatchNorm2d>(out_ch);
      register_child("downsample.conv", down_conv_.get());
      register_child("downsample.bn", down_bn_.get());
    }
  }

  Variable forward(const Variable& x) {
    Variable y = ops::relu(bn1_.forward(conv1_.forward(x)));
    y = ops::relu(bn2_.forward(conv2_.forward(y)));
    y = bn3_.forward(conv3_.forward(y));
    Variable identity = down_conv_ ? down_bn_->forward(down_conv_->forward(x)) : x;
    return ops::relu(ops::add(y, identity));
  }

  Shape4 describe(Shape4 in, const std::string& prefix, LayerTable& table) const {
    Shape4 cur = conv1_.describe(in, join_key(prefix, "conv1"), table);
    cur = bn1_.describe(cur, join_key(prefix, "bn1"), table);
    table.add(join_key(prefix, "relu1"), "activation", cur, 0, eltwise_macs(cur));
    cur = conv2_.describe(cur, join_key(prefix, "conv2"), table);
    cur = bn2_.describe(cur, join_key(prefix, "bn2"), table);
    table.add(join_key(prefix, "relu2"), "activation", cur, 0, eltwise_macs(cur));
    cur = conv3_.describe(cur, join_key(prefix, "conv3"), table);
    cur = bn3_.describe(cur, join_key(prefix, "bn3"), table);
    if (down_conv_) {
      Shape4 d = down_conv_->describe(in, join_key(prefix, "downsample.conv"), table);
      down_bn_->describe(d, join_key(prefix, "downsample.bn"), table);
    }
    table.add(join_key(prefix, "add"), "eltwise", cur, 0, eltwise_macs(cur));
    table.add(join_key(prefix, "relu3"), "activation", cur, 0, eltwise_macs(cur));
    return cur;
  }

 private:
  Conv2d conv1_;
  BatchNorm2d bn1_;
  Conv2d conv2_;
  BatchNorm2d bn2_;
  Conv2d conv3_;
  BatchNorm2d bn3_;
  std::unique_ptr<Conv2d> down_conv_;
  std::unique_ptr<BatchNorm2d> down_bn_;
};

/// ResNeXt-101 (32x4d) layout: stem + 3/4/23/3 bottlenecks.
class ResNeXtBackbone final : public Backbone {
 public:
  ResNeXtBackbone(BackboneConfig config, std::mt19937& rng)
      : Backbone(std::move(config)), stem_(rng, 3, 64, 7, 2, 3, 1, Act::relu) {
    register_child("stage1.block0", &stem_);
    constexpr int kGroups = 32;
    const int block_counts[4] = {3, 4, 23, 3};
    int in_ch = 64;
    for (int stage = 0; stage < 4; ++stage) {
      const int out_ch = config_.stage_channels[static_cast<std::size_t>(stage + 1)];
      const int mid_ch = out_ch / 2;
      // stage 2 is downsampled by the stem maxpool, later stages by their first block
      const int first_stride = stage == 0 ? 1 : 2;
      for (int b = 0; b < block_counts[stage]; ++b) {
        auto block = std::make_unique<Bottleneck>(rng, in_ch, mid_ch, out_ch,
                                                  b == 0 ? first_stride : 1, kGroups);
        register_child("stage" + std::to_string(stage + 2) + ".block" + std::to_string(b),
                       block.get());
        layers_[static_cast<std::size_t>(stage)].push_back(std::move(block));
        in_ch = out_ch;
      }
    }
  }

  std::array<Shape4, 5> describe_stages(Shape4 in, const std::string& prefix,
                                        LayerTable& table) const override {
    std::array<Shape4, 5> shapes;
    Shape4 cur = stem_.describe(in, join_key(prefix, "stage1.block0"), table);
    shapes[0] = cur;
    Shape4 pooled{cur.b, cur.c, (cur.h + 1) / 2, (cur.w + 1) / 2};
    table.add(join_key(prefix, "maxpool"), "maxpool3x3", pooled, 0, pooled.numel() * 9);
    cur = pooled;
    for (int stage = 0; stage < 4; ++stage) {
      for (std::size_t b = 0; b < layers_[static_cast<std::size_t>(stage)].size(); ++b) {
        cur = layers_[static_cast<std::size_t>(stage)][b]->describe(
            cur,
            join_key(prefix, "stage" + std::to_string(stage + 2) + ".block" + std::to_string(b)),
            table);
      }
      shapes[static_cast<std::size_t>(stage + 1)] = cur;
    }
    return shapes;
  }

 protected:
  FeaturePyramid run(const Variable& images) override {
    FeaturePyramid out;
    Variable cur = stem_.forward(images);
    out[0] = cur;
    cur = ops::max_pool(cur, 3, 2, 1);
    for (int stage = 0; stage < 4; ++stage) {
      for (auto& block : layers_[static_cast<std::size_t>(stage)]) cur = block->forward(cur);
      out[static_cast<std::size_t>(stage + 1)] = cur;
    }
    return out;
  }

 private:
  ConvBlock stem_;
  std::array<std::vector<std::unique_ptr<Bottleneck>>, 4> layers_;
};

}  // namespace

std::unique_ptr<Backbone> build_backbone(const BackboneConfig& config, std::mt19937& rng) {
  config.validate();
  std::unique_ptr<Backbone> bb;
  if (config.variant == BackboneVariant::tiny)
    bb = std::make_unique<TinyBackbone>(config, rng);
  else
    bb = std::make_unique<ResNeXtBackbone>(config, rng);
  if (config.pretrained_weights_path) load_checkpoint(*config.pretrained_weights_path, *bb, "backbone");
  return bb;
}

}  // namespace hetnet
