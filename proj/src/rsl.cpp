#include "hetnet/rsl.hpp"

namespace hetnet {

int receptive_field(const std::vector<RfConv>& chain) {
  int rf = 1;
  int jump = 1;
  for (const RfConv& c : chain) {
    rf += c.dilation * (c.kernel - 1) * jump;
    jump *= c.stride;
  }
  return rf;
}

Rsl::Rsl(std::mt19937& rng, int in_channels, int out_channels)
    : b1_conv(rng, in_channels, out_channels, 1),
      b1_bn(out_channels),
      b2_c1(rng, in_channels, out_channels, 1, 1, 0, 1, Act::relu),
      b2_c2(rng, out_channels, out_channels, 7, 1, 3, 1, Act::relu),
      b2_c3(rng, out_channels, out_channels, 3, 1, 7, 7, 1, true),
      b2_bn(out_channels),
      b3_c1(rng, in_channels, out_channels, 1, 1, 0, 1, Act::relu),
      b3_c2(rng, out_channels, out_channels, 7, 1, 3, 1, Act::relu),
      b3_c3(rng, out_channels, out_channels, 7, 1, 3, 1, Act::relu),
      b3_c4(rng, out_channels, out_channels, 3, 1, 7, 7, 1, true),
      b3_bn(out_channels),
      b4_conv(rng, in_channels, out_channels, 1),
      b4_bn(out_channels),
      merge_conv(rng, 3 * out_channels, out_channels, 3, 1, 1),
      merge_bn(out_channels),
      in_channels_(in_channels),
      out_channels_(out_channels) {
  register_child("branch1.conv", &b1_conv);
  register_child("branch1.bn", &b1_bn);
  register_child("branch2.conv1", &b2_c1);
  register_child("branch2.conv2", &b2_c2);
  register_child("branch2.conv3", &b2_c3);
  register_child("branch2.bn", &b2_bn);
  register_child("branch3.conv1", &b3_c1);
  register_child("branch3.conv2", &b3_c2);
  register_child("branch3.conv3", &b3_c3);
  register_child("branch3.conv4", &b3_c4);
  register_child("branch3.bn", &b3_bn);
  register_child("branch4.conv", &b4_conv);
  register_child("branch4.bn", &b4_bn);
  register_child("merge.conv", &merge_conv);
  register_child("merge.bn", &merge_bn);
}

Variable Rsl::forward(const Variable& x) {
  if (x.shape().c != in_channels_)
    throw ConfigError("rsl: expected " + std::to_string(in_channels_) + " channels, got " +
                      std::to_string(x.shape().c));
  Variable f1 = b1_bn.forward(b1_conv.forward(x));
  Variable f2 = b2_bn.forward(b2_c3.forward(b2_c2.forward(b2_c1.forward(x))));
  Variable f3 = b3_bn.forward(b3_c4.forward(b3_c3.forward(b3_c2.forward(b3_c1.forward(x)))));
  Variable f4 = b4_bn.forward(b4_conv.forward(x));
  Variable mid = merge_bn.forward(merge_conv.forward(ops::concat({f1, f2, f3}, 1)));
  return ops::relu(ops::add(mid, f4));
}

std::vector<int> Rsl::receptive_fields() const {
  auto spec = [](const Conv2d& c) {
    return RfConv{c.spec().kernel, c.spec().dilation, c.spec().stride};
  };
  return {
      receptive_field({spec(b1_conv)}),
      receptive_field({spec(b2_c1.conv), spec(b2_c2.conv), spec(b2_c3)}),
      receptive_field({spec(b3_c1.conv), spec(b3_c2.conv), spec(b3_c3.conv), spec(b3_c4)}),
      receptive_field({spec(b4_conv)}),
  };
}

Shape4 Rsl::describe(Shape4 in, const std::string& prefix, LayerTable& table) const {
  Shape4 f1 = b1_conv.describe(in, join_key(prefix, "branch1.conv"), table);
  f1 = b1_bn.describe(f1, join_key(prefix, "branch1.bn"), table);

  Shape4 f2 = b2_c1.describe(in, join_key(prefix, "branch2.conv1"), table);
  f2 = b2_c2.describe(f2, join_key(prefix, "branch2.conv2"), table);
  f2 = b2_c3.describe(f2, join_key(prefix, "branch2.conv3"), table);
  f2 = b2_bn.describe(f2, join_key(prefix, "branch2.bn"), table);

  Shape4 f3 = b3_c1.describe(in, join_key(prefix, "branch3.conv1"), table);
  f3 = b3_c2.describe(f3, join_key(prefix, "branch3.conv2"), table);
  f3 = b3_c3.describe(f3, join_key(prefix, "branch3.conv3"), table);
  f3 = b3_c4.describe(f3, join_key(prefix, "branch3.conv4"), table);
  f3 = b3_bn.describe(f3, join_key(prefix, "branch3.bn"), table);

  Shape4 f4 = b4_conv.describe(in, join_key(prefix, "branch4.conv"), table);
  f4 = b4_bn.describe(f4, join_key(prefix, "branch4.bn"), table);

  Shape4 cat{f1.b, f1.c + f2.c + f3.c, f1.h, f1.w};
  Shape4 mid = merge_conv.describe(cat, join_key(prefix, "merge.conv"), table);
  mid = merge_bn.describe(mid, join_key(prefix, "merge.bn"), table);
  table.add(join_key(prefix, "residual"), "eltwise", mid, 0, eltwise_macs(mid));
  table.add(join_key(prefix, "relu"), "activation", f4, 0, eltwise_macs(f4));
  return mid;
}

}  // namespace hetnet
