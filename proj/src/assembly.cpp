#include "hetnet/assembly.hpp"

namespace hetnet {

const char* to_string(HeadKind k) {
  switch (k) {
    case HeadKind::mic:
      return "mic";
    case HeadKind::rsl:
      return "rsl";
    case HeadKind::icfe_only:
      return "icfe_only";
    case HeadKind::identity:
      return "identity";
  }
  return "identity";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "mic") return HeadKind::mic;
  if (s == "rsl") return HeadKind::rsl;
  if (s == "icfe_only") return HeadKind::icfe_only;
  if (s == "identity") return HeadKind::identity;
  throw ConfigError("unknown head kind '" + s + "'");
}

const char* to_string(FusionCombine c) { return c == FusionCombine::sum ? "sum" : "concat"; }

FusionCombine fusion_combine_from_string(const std::string& s) {
  if (s == "sum") return FusionCombine::sum;
  if (s == "concat") return FusionCombine::concat;
  throw ConfigError("unknown fusion combine mode '" + s + "'");
}

void NetworkConfig::validate() const {
  backbone.validate();
  if (fusion_width <= 0) throw ConfigError("network: fusion width must be positive");
  if (icfe_reduction <= 0) throw ConfigError("network: icfe reduction must be positive");
}

NetworkConfig NetworkConfig::canonical_full() {
  NetworkConfig c;
  c.backbone = BackboneConfig::full();
  c.fusion_width = 64;
  return c;
}

NetworkConfig NetworkConfig::canonical_tiny() {
  NetworkConfig c;
  c.backbone = BackboneConfig::tiny();
  c.fusion_width = 16;
  return c;
}

GlobalExtractor::GlobalExtractor(std::mt19937& rng, int channels, std::vector<int> bins)
    : bins_(std::move(bins)) {
  for (std::size_t i = 0; i < bins_.size(); ++i) {
    bin_convs_.push_back(
        std::make_unique<ConvBlock>(rng, channels, channels, 1, 1, 0, 1, Act::relu));
    register_child("bin" + std::to_string(bins_[i]), bin_convs_.back().get());
  }
  merge_ = std::make_unique<ConvBlock>(
      rng, channels * static_cast<int>(1 + bins_.size()), channels, 3, 1, 1, 1, Act::relu);
  register_child("merge", merge_.get());
}

std::vector<ConvBlock*> GlobalExtractor::bin_convs() {
  std::vector<ConvBlock*> out;
  for (auto& b : bin_convs_) out.push_back(b.get());
  return out;
}

Variable GlobalExtractor::forward(const Variable& x) {
  const Shape4 s = x.shape();
  std::vector<Variable> parts{x};
  for (std::size_t i = 0; i < bins_.size(); ++i) {
    // bins larger than the feature map collapse to the map size
    const std::int64_t bh = std::min<std::int64_t>(bins_[i], s.h);
    const std::int64_t bw = std::min<std::int64_t>(bins_[i], s.w);
    Variable pooled = ops::adaptive_avg_pool(x, bh, bw);
    Variable enc = bin_convs_[i]->forward(pooled);
    parts.push_back(ops::bilinear_upsample(enc, s.h, s.w));
  }
  return merge_->forward(ops::concat(parts, 1));
}

Shape4 GlobalExtractor::describe(Shape4 in, const std::string& prefix, LayerTable& table) const {
  std::int64_t cat_c = in.c;
  for (std::size_t i = 0; i < bins_.size(); ++i) {
    const std::int64_t bh = std::min<std::int64_t>(bins_[i], in.h);
    const std::int64_t bw = std::min<std::int64_t>(bins_[i], in.w);
    const std::string bp = join_key(prefix, "bin" + std::to_string(bins_[i]));
    table.add(join_key(bp, "pool"), "adaptive_pool", {in.b, in.c, bh, bw}, 0, in.numel());
    Shape4 enc = bin_convs_[i]->describe({in.b, in.c, bh, bw}, bp, table);
    table.add(join_key(bp, "upsample"), "resize", {in.b, enc.c, in.h, in.w}, 0,
              4 * in.b * enc.c * in.h * in.w);
    cat_c += enc.c;
  }
  return merge_->describe({in.b, cat_c, in.h, in.w}, join_key(prefix, "merge"), table);
}

CrossAggregate::CrossAggregate(std::mt19937& rng, int width, FusionCombine combine)
    : down_conv(rng, width, width, 3, 1, 1, 1, 1, false),
      down_bn(width),
      combine_(combine),
      width_(width) {
  register_child("down.conv", &down_conv);
  register_child("down.bn", &down_bn);
  merge = std::make_unique<ConvBlock>(rng, combine == FusionCombine::sum ? width : 2 * width,
                                      width, 3, 1, 1, 1, Act::relu);
  register_child("merge", merge.get());
}

std::int64_t CrossAggregate::resolution_ratio(const Shape4& low, const Shape4& high) {
  if (low.h < high.h || low.w < high.w)
    throw InputError("cross_aggregate: low-level side must not be smaller than the high-level side");
  if (low.h % high.h != 0 || low.w % high.w != 0 || low.h / high.h != low.w / high.w)
    throw InputError("cross_aggregate: incompatible resolutions " + low.str() + " vs " +
                     high.str());
  const std::int64_t r = low.h / high.h;
  if ((r & (r - 1)) != 0)
    throw InputError("cross_aggregate: resolution ratio " + std::to_string(r) +
                     " is not a power of two");
  return r;
}

Variable CrossAggregate::forward(const Variable& f_low, const Variable& f_high) {
  const Shape4 ls = f_low.shape(), hs = f_high.shape();
  if (ls.c != width_ || hs.c != width_)
    throw ConfigError("cross_aggregate: both inputs must have the fusion width " +
                      std::to_string(width_));
  const std::int64_t ratio = resolution_ratio(ls, hs);
  // strided conv brings the low side down to the high side's grid
  ops::ConvSpec down_spec = down_conv.spec();
  down_spec.stride = static_cast<int>(ratio);
  Variable low_at_high = down_bn.forward(ops::conv2d(f_low, down_conv.weight, down_conv.bias, down_spec));
  Variable interim_low = ops::mul(f_low, ops::bilinear_upsample(f_high, ls.h, ls.w));
  Variable interim_high = ops::mul(f_high, low_at_high);
  Variable high_up = ops::bilinear_upsample(interim_high, ls.h, ls.w);
  Variable fused = combine_ == FusionCombine::sum ? ops::add(interim_low, high_up)
                                                  : ops::concat({interim_low, high_up}, 1);
  return merge->forward(fused);
}

Shape4 CrossAggregate::describe(Shape4 low, Shape4 high, const std::string& prefix,
                                LayerTable& table) const {
  resolution_ratio(low, high);
  const std::int64_t per_out = static_cast<std::int64_t>(width_) * 9;
  table.add(join_key(prefix, "down.conv"), "conv3x3", high, down_conv.param_count(),
            high.numel() * per_out);
  table.add(join_key(prefix, "down.bn"), "batchnorm", high, 2 * width_, high.numel());
  table.add(join_key(prefix, "up_high"), "resize", low, 0, 4 * low.numel());
  table.add(join_key(prefix, "gate_low"), "eltwise", low, 0, low.numel());
  table.add(join_key(prefix, "gate_high"), "eltwise", high, 0, high.numel());
  table.add(join_key(prefix, "up_interim"), "resize", low, 0, 4 * low.numel());
  Shape4 fused = low;
  if (combine_ == FusionCombine::sum) {
    table.add(join_key(prefix, "sum"), "eltwise", low, 0, low.numel());
  } else {
    fused.c = 2 * width_;
  }
  return merge->describe(fused, join_key(prefix, "merge"), table);
}

std::unique_ptr<HetNet> build_network(const NetworkConfig& config, unsigned seed) {
  std::mt19937 rng(seed);
  return std::make_unique<HetNet>(config, rng);
}

HetNet::HetNet(const NetworkConfig& config, std::mt19937& rng) : config_(config) {
  config_.validate();
  backbone_ = build_backbone(config_.backbone, rng);
  register_child("backbone", backbone_.get());
  const int w = config_.fusion_width;
  for (int i = 0; i < 5; ++i) {
    const int in_ch = config_.backbone.stage_channels[static_cast<std::size_t>(i)];
    const std::string stage = "stage" + std::to_string(i + 1);
    switch (config_.head_assignment[static_cast<std::size_t>(i)]) {
      case HeadKind::mic:
        mic_heads_[static_cast<std::size_t>(i)] =
            std::make_unique<Mic>(rng, in_ch, w, config_.rotation_strategy,
                                  config_.share_icfe_weights, config_.icfe_reduction);
        register_child("mic." + stage, mic_heads_[static_cast<std::size_t>(i)].get());
        break;
      case HeadKind::icfe_only:
        mic_heads_[static_cast<std::size_t>(i)] =
            std::make_unique<Mic>(rng, in_ch, w, RotationStrategy::single,
                                  config_.share_icfe_weights, config_.icfe_reduction);
        register_child("mic." + stage, mic_heads_[static_cast<std::size_t>(i)].get());
        break;
      case HeadKind::rsl:
        rsl_heads_[static_cast<std::size_t>(i)] = std::make_unique<Rsl>(rng, in_ch, w);
        register_child("rsl." + stage, rsl_heads_[static_cast<std::size_t>(i)].get());
        break;
      case HeadKind::identity:
        identity_heads_[static_cast<std::size_t>(i)] =
            std::make_unique<ConvBlock>(rng, in_ch, w, 1, 1, 0, 1, Act::relu);
        register_child("proj." + stage, identity_heads_[static_cast<std::size_t>(i)].get());
        break;
    }
  }
  if (config_.use_global_extractor) {
    ge_ = std::make_unique<GlobalExtractor>(rng, w);
    register_child("ge", ge_.get());
    ca_f56_ = std::make_unique<CrossAggregate>(rng, w, config_.fusion_combine);
    register_child("fuse.f56", ca_f56_.get());
  }
  ca_f21_ = std::make_unique<CrossAggregate>(rng, w, config_.fusion_combine);
  ca_f22_ = std::make_unique<CrossAggregate>(rng, w, config_.fusion_combine);
  ca_f23_ = std::make_unique<CrossAggregate>(rng, w, config_.fusion_combine);
  ca_f31_ = std::make_unique<CrossAggregate>(rng, w, config_.fusion_combine);
  ca_main_ = std::make_unique<CrossAggregate>(rng, w, config_.fusion_combine);
  register_child("fuse.f21", ca_f21_.get());
  register_child("fuse.f22", ca_f22_.get());
  register_child("fuse.f23", ca_f23_.get());
  register_child("fuse.f31", ca_f31_.get());
  register_child("fuse.main", ca_main_.get());
  predict_block_ = std::make_unique<ConvBlock>(rng, w, w, 3, 1, 1, 1, Act::relu);
  predict_conv_ = std::make_unique<Conv2d>(rng, w, 1, 1);
  register_child("heads.main.block", predict_block_.get());
  register_child("heads.main.conv", predict_conv_.get());
  if (config_.deep_supervision) {
    for (int i = 0; i < 4; ++i) {
      aux_convs_[static_cast<std::size_t>(i)] = std::make_unique<Conv2d>(rng, w, 1, 1);
      register_child("heads.aux" + std::to_string(i + 1),
                     aux_convs_[static_cast<std::size_t>(i)].get());
    }
  }
  if (config_.edge_supervision) {
    edge_conv_ = std::make_unique<Conv2d>(rng, w, 1, 1);
    register_child("heads.edge", edge_conv_.get());
  }
}

Variable HetNet::head_forward(int stage, const Variable& x) {
  const auto i = static_cast<std::size_t>(stage);
  switch (config_.head_assignment[i]) {
    case HeadKind::mic:
    case HeadKind::icfe_only:
      return mic_heads_[i]->forward(x);
    case HeadKind::rsl:
      return rsl_heads_[i]->forward(x);
    case HeadKind::identity:
      return identity_heads_[i]->forward(x);
  }
  throw ConfigError("unknown head kind");
}

Shape4 HetNet::head_describe(int stage, Shape4 in, LayerTable& table) const {
  const auto i = static_cast<std::size_t>(stage);
  const std::string name = "stage" + std::to_string(stage + 1);
  switch (config_.head_assignment[i]) {
    case HeadKind::mic:
    case HeadKind::icfe_only:
      return mic_heads_[i]->describe(in, "mic." + name, table);
    case HeadKind::rsl:
      return rsl_heads_[i]->describe(in, "rsl." + name, table);
    case HeadKind::identity:
      return identity_heads_[i]->describe(in, "proj." + name, table);
  }
  throw ConfigError("unknown head kind");
}

FusionGraphOutputs HetNet::run(const Variable& images) {
  const Shape4 in_shape = images.shape();
  FusionGraphOutputs out;
  FeaturePyramid pyramid = backbone_->extract(images);
  for (int i = 0; i < 5; ++i)
    out.stage_features[static_cast<std::size_t>(i)] =
        head_forward(i, pyramid[static_cast<std::size_t>(i)]);
  const Variable& f1 = out.stage_features[0];
  const Variable& f2 = out.stage_features[1];
  const Variable& f3 = out.stage_features[2];
  const Variable& f4 = out.stage_features[3];
  const Variable& f5 = out.stage_features[4];
  out.f21 = ca_f21_->forward(f1, f2);
  out.f22 = ca_f22_->forward(f2, f3);
  if (config_.use_global_extractor) {
    out.stage_features[5] = ge_->forward(f5);
    out.f23 = ca_f23_->forward(f4, ca_f56_->forward(f5, out.stage_features[5]));
  } else {
    out.f23 = ca_f23_->forward(f4, f5);
  }
  out.f31 = ca_f31_->forward(out.f22, out.f23);
  Variable pre = ca_main_->forward(out.f21, out.f31);
  Variable logits = predict_conv_->forward(predict_block_->forward(pre));
  out.main_output = ops::bilinear_upsample(logits, in_shape.h, in_shape.w);
  if (config_.deep_supervision) {
    out.aux_outputs.push_back(aux_convs_[0]->forward(out.f21));
    out.aux_outputs.push_back(aux_convs_[1]->forward(out.f22));
    out.aux_outputs.push_back(aux_convs_[2]->forward(out.f23));
    out.aux_outputs.push_back(aux_convs_[3]->forward(out.f31));
  }
  if (config_.edge_supervision) out.edge_output = edge_conv_->forward(out.f21);
  return out;
}

FusionGraphOutputs HetNet::forward(const Variable& images, RunMode mode) {
  set_train(mode == RunMode::train);
  if (mode == RunMode::eval) {
    NoGradGuard guard;
    return run(images);
  }
  return run(images);
}

Tensor HetNet::predict(const Tensor& images) {
  set_train(false);
  NoGradGuard guard;
  FusionGraphOutputs out = run(Variable(images));
  Tensor prob(out.main_output.shape());
  const Tensor& logits = out.main_output.value();
  for (std::int64_t i = 0; i < prob.numel(); ++i)
    prob.data()[i] = sigmoid_scalar(logits.data()[i]);
  return prob;
}

LayerTable HetNet::describe(std::int64_t input_h, std::int64_t input_w) const {
  LayerTable table;
  const Shape4 in{1, 3, input_h, input_w};
  std::array<Shape4, 5> py = backbone_->describe_stages(in, "backbone", table);
  std::array<Shape4, 6> f;
  for (int i = 0; i < 5; ++i)
    f[static_cast<std::size_t>(i)] = head_describe(i, py[static_cast<std::size_t>(i)], table);
  Shape4 f23_high;
  if (config_.use_global_extractor) {
    f[5] = ge_->describe(f[4], "ge", table);
    f23_high = ca_f56_->describe(f[4], f[5], "fuse.f56", table);
  } else {
    f23_high = f[4];
  }
  Shape4 f21 = ca_f21_->describe(f[0], f[1], "fuse.f21", table);
  Shape4 f22 = ca_f22_->describe(f[1], f[2], "fuse.f22", table);
  Shape4 f23 = ca_f23_->describe(f[3], f23_high, "fuse.f23", table);
  Shape4 f31 = ca_f31_->describe(f22, f23, "fuse.f31", table);
  Shape4 pre = ca_main_->describe(f21, f31, "fuse.main", table);
  Shape4 cur = predict_block_->describe(pre, "heads.main.block", table);
  cur = predict_conv_->describe(cur, "heads.main.conv", table);
  table.add("heads.main.upsample", "resize", {cur.b, cur.c, input_h, input_w}, 0,
            4 * cur.b * cur.c * input_h * input_w);
  if (config_.deep_supervision) {
    aux_convs_[0]->describe(f21, "heads.aux1", table);
    aux_convs_[1]->describe(f22, "heads.aux2", table);
    aux_convs_[2]->describe(f23, "heads.aux3", table);
    aux_convs_[3]->describe(f31, "heads.aux4", table);
  }
  if (config_.edge_supervision) edge_conv_->describe(f21, "heads.edge", table);
  return table;
}

AblationGrid architecture_grid(const NetworkConfig& base) {
  AblationGrid grid{"architecture", {}};
  NetworkConfig a_ba = base;
  a_ba.head_assignment = {HeadKind::rsl, HeadKind::rsl, HeadKind::rsl, HeadKind::mic,
                          HeadKind::mic};
  NetworkConfig a_a = base;
  a_a.head_assignment = {HeadKind::mic, HeadKind::mic, HeadKind::mic, HeadKind::mic,
                         HeadKind::mic};
  NetworkConfig a_b = base;
  a_b.head_assignment = {HeadKind::rsl, HeadKind::rsl, HeadKind::rsl, HeadKind::rsl,
                         HeadKind::rsl};
  NetworkConfig het = base;
  het.head_assignment = {HeadKind::mic, HeadKind::mic, HeadKind::mic, HeadKind::rsl,
                         HeadKind::rsl};
  grid.rows = {{"A_ba", a_ba}, {"A_a", a_a}, {"A_b", a_b}, {"HetNet", het}};
  return grid;
}

AblationGrid components_grid(const NetworkConfig& base) {
  AblationGrid grid{"components", {}};
  const std::array<HeadKind, 5> ident{HeadKind::identity, HeadKind::identity, HeadKind::identity,
                                      HeadKind::identity, HeadKind::identity};
  NetworkConfig r1 = base;
  r1.head_assignment = ident;
  r1.use_global_extractor = false;
  NetworkConfig r2 = base;
  r2.head_assignment = ident;
  r2.use_global_extractor = true;
  NetworkConfig r3 = r2;
  r3.head_assignment = {HeadKind::icfe_only, HeadKind::icfe_only, HeadKind::icfe_only,
                        HeadKind::identity, HeadKind::identity};
  NetworkConfig r4 = r2;
  r4.head_assignment = {HeadKind::mic, HeadKind::mic, HeadKind::mic, HeadKind::identity,
                        HeadKind::identity};
  NetworkConfig r5 = r2;
  r5.head_assignment = {HeadKind::identity, HeadKind::identity, HeadKind::identity, HeadKind::rsl,
                        HeadKind::rsl};
  NetworkConfig het = r2;
  het.head_assignment = {HeadKind::mic, HeadKind::mic, HeadKind::mic, HeadKind::rsl,
                         HeadKind::rsl};
  grid.rows = {{"I", r1}, {"II", r2}, {"III", r3}, {"IV", r4}, {"V", r5}, {"HetNet", het}};
  return grid;
}

AblationGrid rotation_grid(const NetworkConfig& base) {
  AblationGrid grid{"rotation", {}};
  const std::array<std::pair<const char*, RotationStrategy>, 5> rows{{
      {"ICFE", RotationStrategy::single},
      {"ICFE+ICFE", RotationStrategy::dual_same},
      {"ICFE*3", RotationStrategy::tri},
      {"ICFE*4", RotationStrategy::quad},
      {"MIC", RotationStrategy::mic},
  }};
  for (const auto& [label, strategy] : rows) {
    NetworkConfig c = base;
    c.head_assignment = {HeadKind::mic, HeadKind::mic, HeadKind::mic, HeadKind::rsl,
                         HeadKind::rsl};
    c.rotation_strategy = strategy;
    grid.rows.emplace_back(label, c);
  }
  return grid;
}

AblationGrid make_grid(const std::string& name, const NetworkConfig& base) {
  if (name == "architecture") return architecture_grid(base);
  if (name == "components") return components_grid(base);
  if (name == "rotation") return rotation_grid(base);
  throw ConfigError("unknown ablation grid '" + name + "' (architecture|components|rotation)");
}

}  // namespace hetnet
