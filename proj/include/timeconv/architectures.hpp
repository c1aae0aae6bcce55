#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "timeconv/conv.hpp"
#include "timeconv/network.hpp"

namespace tcn {

// The six benchmark networks. 2D nets classify a single 48x48 frame;
// timeconv_* nets take the full 5-channel window as the first convolution's
// input channels; 3D/(2+1)D nets treat the window as a temporal axis.
enum class ArchId {
  xception2d,
  resnet20_2plus1d,
  resnet20_3d,
  timeconv_xception,
  timeconv_resnet20,
  timeconv_mobilenetv2,
};

inline constexpr std::array<ArchId, 6> all_archs = {
    ArchId::xception2d,          ArchId::resnet20_2plus1d,
    ArchId::resnet20_3d,         ArchId::timeconv_xception,
    ArchId::timeconv_resnet20,   ArchId::timeconv_mobilenetv2,
};

inline const char* arch_name(ArchId id) {
  switch (id) {
    case ArchId::xception2d: return "xception2d";
    case ArchId::resnet20_2plus1d: return "resnet20_2plus1d";
    case ArchId::resnet20_3d: return "resnet20_3d";
    case ArchId::timeconv_xception: return "timeconv_xception";
    case ArchId::timeconv_resnet20: return "timeconv_resnet20";
    case ArchId::timeconv_mobilenetv2: return "timeconv_mobilenetv2";
  }
  throw value_error("unknown architecture id");
}

inline ArchId arch_from_name(const std::string& name) {
  for (ArchId id : all_archs)
    if (name == arch_name(id)) return id;
  throw value_error("unknown architecture '" + name + "'");
}

inline constexpr size_t kInputSide = 48;
inline constexpr size_t kWindowWidth = 5;
inline constexpr size_t kNumClasses = 7;

namespace detail {

template <typename T>
LayerPtr<T> conv2d(Conv2dSpec s) {
  return std::make_unique<Conv2d<T>>(s);
}
template <typename T>
LayerPtr<T> bn(size_t c) {
  return std::make_unique<BatchNorm<T>>(c);
}
template <typename T>
LayerPtr<T> relu() {
  return std::make_unique<ReLU<T>>();
}
template <typename T>
LayerPtr<T> relu6() {
  return std::make_unique<ReLU6<T>>();
}

// Four blocks of [separable conv, bn, relu, separable conv, bn, maxpool]
// against a strided 1x1 projection, after two plain valid convolutions; a
// 3x3 classifier convolution and global pooling close the net. The first
// convolution is the spatiotemporal encoding layer when in_c > 1.
template <typename T>
Network<T> build_mini_xception(size_t in_c, Rng& rng,
                               const std::string& arch) {
  Network<T> net(arch, {in_c, kInputSide, kInputSide}, kNumClasses);
  size_t hw = kInputSide;

  net.add(conv2d<T>(Conv2dSpec{.in_c = in_c, .out_c = 8, .bias = false}));
  hw -= 2;
  net.add(bn<T>(8)).add(relu<T>());
  net.add(conv2d<T>(Conv2dSpec{.in_c = 8, .out_c = 8, .bias = false}));
  hw -= 2;
  net.add(bn<T>(8)).add(relu<T>());

  size_t in = 8;
  for (size_t out : {size_t(16), size_t(32), size_t(64), size_t(128)}) {
    Sequential<T> main;
    main.add(std::make_unique<SeparableConv2d<T>>(
        in, out, 3, 1, 1, 1, 1, 1, /*bias=*/false));
    main.add(bn<T>(out)).add(relu<T>());
    main.add(std::make_unique<SeparableConv2d<T>>(
        out, out, 3, 1, 1, 1, 1, 1, /*bias=*/false));
    main.add(bn<T>(out));
    auto [pp, pa] = same_padding(hw, 3, 2);
    main.add(std::make_unique<MaxPool2d<T>>(3, 2, pp, pa, pp, pa));

    Sequential<T> shortcut;
    shortcut.add(
        conv2d<T>(Conv2dSpec{.in_c = in, .out_c = out, .kh = 1, .kw = 1,
                             .sh = 2, .sw = 2, .bias = false}));
    shortcut.add(bn<T>(out));

    net.add(std::make_unique<Residual<T>>(std::move(main), std::move(shortcut),
                                          /*relu_after=*/false));
    hw = (hw + 1) / 2;
    in = out;
  }

  Conv2dSpec head{.in_c = 128, .out_c = kNumClasses, .bias = true};
  head.same(hw, hw);
  net.add(conv2d<T>(head));
  net.add(std::make_unique<GlobalAvgPool<T>>());

  net.initialize(rng);
  return net;
}

// Shared ResNet20 topology: 3 stages x 3 blocks at 16/32/64 channels, first
// block of stages 2 and 3 strided with a biased 1x1 projection (no bn on the
// projection), global pooling and a 7-way classifier. conv_fn supplies the
// 3x3 (or factorized/volumetric) convolution; short_fn the 1x1 projection.
template <typename T, typename ConvFn, typename ShortFn>
void resnet20_body(Network<T>& net, ConvFn&& conv_fn, ShortFn&& short_fn) {
  constexpr size_t stage_channels[3] = {16, 32, 64};
  net.add(conv_fn(/*in=*/net.sample_shape()[0], /*out=*/16, /*stride=*/1));
  net.add(bn<T>(16)).add(relu<T>());

  size_t in = 16;
  for (size_t stage = 0; stage < 3; ++stage) {
    const size_t out = stage_channels[stage];
    for (size_t block = 0; block < 3; ++block) {
      const size_t stride = (stage > 0 && block == 0) ? 2 : 1;
      Sequential<T> main;
      main.add(conv_fn(in, out, stride));
      main.add(bn<T>(out)).add(relu<T>());
      main.add(conv_fn(out, out, 1));
      main.add(bn<T>(out));
      Sequential<T> shortcut;
      if (stride != 1 || in != out) shortcut.add(short_fn(in, out, stride));
      net.add(std::make_unique<Residual<T>>(
          std::move(main), std::move(shortcut), /*relu_after=*/true));
      in = out;
    }
  }
  net.add(std::make_unique<GlobalAvgPool<T>>());
  net.add(std::make_unique<Dense<T>>(64, kNumClasses, /*bias=*/true));
}

template <typename T>
Network<T> build_resnet20_2d(size_t in_c, Rng& rng, const std::string& arch) {
  Network<T> net(arch, {in_c, kInputSide, kInputSide}, kNumClasses);
  size_t hw = kInputSide;
  auto conv_fn = [&hw](size_t in, size_t out, size_t stride) {
    Conv2dSpec s{.in_c = in, .out_c = out, .sh = stride, .sw = stride,
                 .bias = true};
    s.same(hw, hw);
    if (stride == 2) hw = (hw + 1) / 2;
    return std::make_unique<Conv2d<T>>(s);
  };
  size_t short_hw = kInputSide;   // tracks the shortcut's input extent
  auto short_fn = [&short_hw, &hw](size_t in, size_t out, size_t stride) {
    (void)short_hw;
    return std::make_unique<Conv2d<T>>(
        Conv2dSpec{.in_c = in, .out_c = out, .kh = 1, .kw = 1, .sh = stride,
                   .sw = stride, .bias = true});
  };
  resnet20_body(net, conv_fn, short_fn);
  net.initialize(rng);
  return net;
}

// Every 3x3 becomes 3x3x3; the window axis is never strided (T=5 cannot
// survive repeated temporal halving), spatial striding as in 2D.
template <typename T>
Network<T> build_resnet20_3d(Rng& rng, const std::string& arch) {
  Network<T> net(arch, {1, kWindowWidth, kInputSide, kInputSide}, kNumClasses);
  size_t hw = kInputSide;
  auto conv_fn = [&hw](size_t in, size_t out, size_t stride) {
    Conv3dSpec s{.in_c = in, .out_c = out, .sh = stride, .sw = stride,
                 .bias = true};
    std::tie(s.pf, s.pk) = same_padding(kWindowWidth, 3, 1);
    std::tie(s.pt, s.pb) = same_padding(hw, 3, stride);
    std::tie(s.pl, s.pr) = same_padding(hw, 3, stride);
    if (stride == 2) hw = (hw + 1) / 2;
    return std::make_unique<Conv3d<T>>(s);
  };
  auto short_fn = [](size_t in, size_t out, size_t stride) {
    return std::make_unique<Conv3d<T>>(
        Conv3dSpec{.in_c = in, .out_c = out, .kt = 1, .kh = 1, .kw = 1,
                   .st = 1, .sh = stride, .sw = stride, .bias = true});
  };
  resnet20_body(net, conv_fn, short_fn);
  net.initialize(rng);
  return net;
}

// Each 3x3x3 is factorized into 1x3x3 -> relu -> 3x1x1 with intermediate
// width M = out_channels; 1x1x1 projections stay unfactorized.
template <typename T>
Network<T> build_resnet20_2plus1d(Rng& rng, const std::string& arch) {
  Network<T> net(arch, {1, kWindowWidth, kInputSide, kInputSide}, kNumClasses);
  size_t hw = kInputSide;
  auto conv_fn = [&hw](size_t in, size_t out, size_t stride) {
    Conv2Plus1dSpec s;
    s.in_c = in;
    s.out_c = out;
    s.mid_c = out;
    s.k = 3;
    s.kt = 3;
    s.sh = s.sw = stride;
    s.st = 1;
    std::tie(s.pt, s.pb) = same_padding(hw, 3, stride);
    std::tie(s.pl, s.pr) = same_padding(hw, 3, stride);
    std::tie(s.pf, s.pk) = same_padding(kWindowWidth, 3, 1);
    s.bias = true;
    if (stride == 2) hw = (hw + 1) / 2;
    return std::make_unique<Conv2Plus1d<T>>(s);
  };
  auto short_fn = [](size_t in, size_t out, size_t stride) {
    return std::make_unique<Conv3d<T>>(
        Conv3dSpec{.in_c = in, .out_c = out, .kt = 1, .kh = 1, .kw = 1,
                   .st = 1, .sh = stride, .sw = stride, .bias = true});
  };
  resnet20_body(net, conv_fn, short_fn);
  net.initialize(rng);
  return net;
}

// Inverted-residual net, width multiplier 1.0, first stride reduced to 1 so
// 48x48 inputs keep enough spatial extent. Feature convolutions carry no
// bias; only the classifier does.
template <typename T>
Network<T> build_mobilenet_v2(size_t in_c, Rng& rng, const std::string& arch) {
  Network<T> net(arch, {in_c, kInputSide, kInputSide}, kNumClasses);
  size_t hw = kInputSide;

  Conv2dSpec stem{.in_c = in_c, .out_c = 32, .sh = 1, .sw = 1, .bias = false};
  stem.same(hw, hw);
  net.add(conv2d<T>(stem)).add(bn<T>(32)).add(relu6<T>());

  struct Group { size_t expand, out, blocks, stride; };
  constexpr Group groups[] = {
      {1, 16, 1, 1},  {6, 24, 2, 2},  {6, 32, 3, 2}, {6, 64, 4, 2},
      {6, 96, 3, 1},  {6, 160, 3, 2}, {6, 320, 1, 1},
  };

  size_t in = 32;
  for (const Group& g : groups) {
    for (size_t b = 0; b < g.blocks; ++b) {
      const size_t stride = (b == 0) ? g.stride : 1;
      const size_t mid = g.expand * in;
      Sequential<T> main;
      if (g.expand != 1) {
        main.add(conv2d<T>(Conv2dSpec{.in_c = in, .out_c = mid, .kh = 1,
                                      .kw = 1, .bias = false}));
        main.add(bn<T>(mid)).add(relu6<T>());
      }
      auto [pp, pa] = same_padding(hw, 3, stride);
      main.add(std::make_unique<DepthwiseConv2d<T>>(mid, 3, stride, pp, pa, pp,
                                                    pa, /*bias=*/false));
      main.add(bn<T>(mid)).add(relu6<T>());
      main.add(conv2d<T>(Conv2dSpec{.in_c = mid, .out_c = g.out, .kh = 1,
                                    .kw = 1, .bias = false}));
      main.add(bn<T>(g.out));
      if (stride == 2) hw = (hw + 1) / 2;

      if (stride == 1 && in == g.out) {
        net.add(std::make_unique<Residual<T>>(
            std::move(main), Sequential<T>{}, /*relu_after=*/false));
      } else {
        net.add(std::make_unique<Sequential<T>>(std::move(main)));
      }
      in = g.out;
    }
  }

  net.add(conv2d<T>(Conv2dSpec{.in_c = 320, .out_c = 1280, .kh = 1, .kw = 1,
                               .bias = false}));
  net.add(bn<T>(1280)).add(relu6<T>());
  net.add(std::make_unique<GlobalAvgPool<T>>());
  net.add(std::make_unique<Dense<T>>(1280, kNumClasses, /*bias=*/true));

  net.initialize(rng);
  return net;
}

// Two strided conv/bn/relu blocks and a linear head; the desk-scale net used
// by the synthetic-data experiments and fast tests.
template <typename T>
Network<T> build_tiny(size_t in_c, Rng& rng, const std::string& arch) {
  Network<T> net(arch, {in_c, kInputSide, kInputSide}, kNumClasses);
  Conv2dSpec c1{.in_c = in_c, .out_c = 8, .sh = 2, .sw = 2, .bias = false};
  c1.same(48, 48);
  Conv2dSpec c2{.in_c = 8, .out_c = 16, .sh = 2, .sw = 2, .bias = false};
  c2.same(24, 24);
  net.add(conv2d<T>(c1)).add(bn<T>(8)).add(relu<T>());
  net.add(conv2d<T>(c2)).add(bn<T>(16)).add(relu<T>());
  net.add(std::make_unique<GlobalAvgPool<T>>());
  net.add(std::make_unique<Dense<T>>(16, kNumClasses, /*bias=*/true));
  net.initialize(rng);
  return net;
}

}  // namespace detail

template <typename T>
Network<T> build_network(ArchId id, Rng& rng) {
  switch (id) {
    case ArchId::xception2d:
      return detail::build_mini_xception<T>(1, rng, arch_name(id));
    case ArchId::timeconv_xception:
      return detail::build_mini_xception<T>(kWindowWidth, rng, arch_name(id));
    case ArchId::timeconv_resnet20:
      return detail::build_resnet20_2d<T>(kWindowWidth, rng, arch_name(id));
    case ArchId::resnet20_3d:
      return detail::build_resnet20_3d<T>(rng, arch_name(id));
    case ArchId::resnet20_2plus1d:
      return detail::build_resnet20_2plus1d<T>(rng, arch_name(id));
    case ArchId::timeconv_mobilenetv2:
      return detail::build_mobilenet_v2<T>(kWindowWidth, rng, arch_name(id));
  }
  throw value_error("unknown architecture id");
}

// Everything buildable by name: the six benchmark networks plus desk-scale
// variants (tiny_timeconv / tiny_2d) and the 1-channel backbones used to
// study encoding-layer parameter deltas.
template <typename T>
Network<T> build_network_by_name(const std::string& name, Rng& rng) {
  for (ArchId id : all_archs)
    if (name == arch_name(id)) return build_network<T>(id, rng);
  if (name == "tiny_timeconv") return detail::build_tiny<T>(kWindowWidth, rng, name);
  if (name == "tiny_2d") return detail::build_tiny<T>(1, rng, name);
  if (name == "resnet20_2d") return detail::build_resnet20_2d<T>(1, rng, name);
  if (name == "mobilenetv2_2d") return detail::build_mobilenet_v2<T>(1, rng, name);
  throw value_error("unknown architecture '" + name +
                    "' (expected one of: xception2d, resnet20_2plus1d, "
                    "resnet20_3d, timeconv_xception, timeconv_resnet20, "
                    "timeconv_mobilenetv2, tiny_timeconv, tiny_2d, "
                    "resnet20_2d, mobilenetv2_2d)");
}

inline std::vector<std::string> arch_registry() {
  std::vector<std::string> names;
  for (ArchId id : all_archs) names.push_back(arch_name(id));
  names.insert(names.end(), {"tiny_timeconv", "tiny_2d", "resnet20_2d",
                             "mobilenetv2_2d"});
  return names;
}

}  // namespace tcn
