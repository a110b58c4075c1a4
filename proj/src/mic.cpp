#include "hetnet/mic.hpp"

#include <algorithm>

namespace hetnet {

Icfe::Icfe(std::mt19937& rng, int in_channels, int reduction, bool conv_bias)
    : joint(rng, in_channels, std::max(8, in_channels / reduction), 1, 1, 0, 1, Act::swish,
            /*with_bn=*/true, /*conv_bias=*/conv_bias),
      conv_h(rng, std::max(8, in_channels / reduction), in_channels, 1, 1, 0, 1, 1, conv_bias),
      conv_w(rng, std::max(8, in_channels / reduction), in_channels, 1, 1, 0, 1, 1, conv_bias),
      in_channels_(in_channels),
      mid_channels_(std::max(8, in_channels / reduction)) {
  register_child("joint", &joint);
  register_child("attn_h", &conv_h);
  register_child("attn_w", &conv_w);
}

Icfe::Detail Icfe::forward_detail(const Variable& x) {
  const Shape4 s = x.shape();
  if (s.c != in_channels_)
    throw ConfigError("icfe: expected " + std::to_string(in_channels_) + " channels, got " +
                      std::to_string(s.c));
  // Axis profiles: rows (B,C,H,1) and columns permuted to (B,C,W,1),
  // concatenated along the length axis and encoded together.
  Variable ph = ops::mean_over_w(x);
  Variable pv = ops::transpose_hw(ops::mean_over_h(x));
  Variable mid = joint.forward(ops::concat({ph, pv}, 2));
  Variable mid_h = ops::slice(mid, 2, 0, s.h);
  Variable mid_w = ops::transpose_hw(ops::slice(mid, 2, s.h, s.w));
  Detail d;
  d.attn_h = ops::sigmoid(conv_h.forward(mid_h));
  d.attn_w = ops::sigmoid(conv_w.forward(mid_w));
  d.out = ops::mul(ops::mul(d.attn_h, d.attn_w), x);
  return d;
}

Variable Icfe::forward(const Variable& x) { return forward_detail(x).out; }

Shape4 Icfe::describe(Shape4 in, const std::string& prefix, LayerTable& table) const {
  const Shape4 profile{in.b, in.c, in.h + in.w, 1};
  table.add(join_key(prefix, "pool"), "axis_pool", profile, 0, 2 * in.numel());
  Shape4 mid = joint.describe(profile, join_key(prefix, "joint"), table);
  const Shape4 mh{in.b, mid.c, in.h, 1}, mw{in.b, mid.c, in.w, 1};
  Shape4 ah = conv_h.describe(mh, join_key(prefix, "attn_h"), table);
  Shape4 aw = conv_w.describe(mw, join_key(prefix, "attn_w"), table);
  table.add(join_key(prefix, "gate"), "eltwise", in, 0,
            2 * in.numel() + ah.numel() + aw.numel());  // two products + two sigmoids
  return in;
}

const char* to_string(RotationStrategy s) {
  switch (s) {
    case RotationStrategy::single:
      return "single";
    case RotationStrategy::dual_same:
      return "dual_same";
    case RotationStrategy::tri:
      return "tri";
    case RotationStrategy::quad:
      return "quad";
    case RotationStrategy::mic:
      return "mic";
  }
  return "mic";
}

RotationStrategy rotation_strategy_from_string(const std::string& s) {
  if (s == "single") return RotationStrategy::single;
  if (s == "dual_same") return RotationStrategy::dual_same;
  if (s == "tri") return RotationStrategy::tri;
  if (s == "quad") return RotationStrategy::quad;
  if (s == "mic") return RotationStrategy::mic;
  throw ConfigError("unknown rotation strategy '" + s + "'");
}

std::vector<int> strategy_orientations(RotationStrategy s) {
  switch (s) {
    case RotationStrategy::single:
      return {0};
    case RotationStrategy::dual_same:
      return {0, 0};
    case RotationStrategy::mic:
      return {0, 1};
    case RotationStrategy::tri:
      return {0, 1, 2};
    case RotationStrategy::quad:
      return {0, 1, 2, 3};
  }
  return {0, 1};
}

Mic::Mic(std::mt19937& rng, int in_channels, int width, RotationStrategy strategy,
         bool share_icfe_weights, int icfe_reduction)
    : proj(rng, in_channels, width, 1),
      strategy_(strategy),
      share_weights_(share_icfe_weights),
      orientations_(strategy_orientations(strategy)) {
  register_child("proj", &proj);
  const std::size_t n = share_icfe_weights ? 1 : orientations_.size();
  for (std::size_t i = 0; i < n; ++i) {
    icfes_.push_back(std::make_unique<Icfe>(rng, width, icfe_reduction));
    register_child("icfe" + std::to_string(i), icfes_.back().get());
  }
  out3_ = std::make_unique<ConvBlock>(rng, width, width, 3, 1, 1, 1, Act::relu);
  out1_ = std::make_unique<ConvBlock>(rng, width, width, 1, 1, 0, 1, Act::relu);
  register_child("out3", out3_.get());
  register_child("out1", out1_.get());
}

Mic::Detail Mic::forward_detail(const Variable& x) {
  const Shape4 s = x.shape();
  const bool rotates = std::any_of(orientations_.begin(), orientations_.end(),
                                   [](int d) { return d % 2 != 0; });
  if (rotates && s.h != s.w)
    throw InputError("mic: rotating strategies need square spatial input, got " + s.str());
  Variable p = proj.forward(x);
  Detail d;
  for (std::size_t i = 0; i < orientations_.size(); ++i) {
    const int rot = orientations_[i];
    Variable f = icfe_for(i).forward(rot == 0 ? p : ops::rot90(p, rot));
    d.factors.push_back(rot == 0 ? f : ops::rot90(f, -rot));
  }
  d.product = d.factors[0];
  for (std::size_t i = 1; i < d.factors.size(); ++i)
    d.product = ops::mul(d.product, d.factors[i]);
  d.out = out1_->forward(out3_->forward(d.product));
  return d;
}

Variable Mic::forward(const Variable& x) { return forward_detail(x).out; }

Shape4 Mic::describe(Shape4 in, const std::string& prefix, LayerTable& table) const {
  Shape4 p = proj.describe(in, join_key(prefix, "proj"), table);
  for (std::size_t i = 0; i < orientations_.size(); ++i) {
    if (share_weights_ && i > 0) {
      // repeated application of the shared extractor: count MACs, not params
      LayerTable tmp;
      icfes_[0]->describe(p, join_key(prefix, "icfe0"), tmp);
      for (auto& r : tmp.rows) {
        r.params = 0;
        table.rows.push_back(std::move(r));
      }
    } else {
      const std::size_t idx = share_weights_ ? 0 : i;
      icfes_[idx]->describe(p, join_key(prefix, "icfe" + std::to_string(idx)), table);
    }
  }
  if (orientations_.size() > 1)
    table.add(join_key(prefix, "product"), "eltwise", p, 0,
              static_cast<std::int64_t>(orientations_.size() - 1) * p.numel());
  Shape4 cur = out3_->describe(p, join_key(prefix, "out3"), table);
  return out1_->describe(cur, join_key(prefix, "out1"), table);
}

}  // namespace hetnet
