#include "fsg/dawim.hpp"

#include <algorithm>

namespace fsg {

namespace {

constexpr const char* kBandNames[4] = {"ll", "lh", "hl", "hh"};

}  // namespace

const char* to_string(DawimVariant v) {
  switch (v) {
    case DawimVariant::full: return "full";
    case DawimVariant::difference: return "difference";
    case DawimVariant::conv211: return "conv211";
    case DawimVariant::conv233: return "conv233";
    case DawimVariant::no_se: return "noSE";
    case DawimVariant::no_residual: return "noRes";
  }
  return "?";
}

DawimVariant parse_dawim_variant(const std::string& s) {
  if (s == "full") return DawimVariant::full;
  if (s == "difference" || s == "off") return DawimVariant::difference;
  if (s == "conv211") return DawimVariant::conv211;
  if (s == "conv233") return DawimVariant::conv233;
  if (s == "noSE") return DawimVariant::no_se;
  if (s == "noRes") return DawimVariant::no_residual;
  throw Error("unknown dawim variant '" + s +
              "' (expected full, difference, conv211, conv233, noSE, noRes, off)");
}

std::size_t se_reduction(std::size_t channels) {
  return std::min<std::size_t>(16, std::max<std::size_t>(1, channels / 4));
}

SeBlock SeBlock::make(std::size_t channels, Rng& rng) {
  const std::size_t r = se_reduction(channels);
  if (channels % r != 0)
    throw ShapeError("SE block: channels " + std::to_string(channels) + " not divisible by reduction " +
                     std::to_string(r));
  const std::size_t hidden = channels / r;
  return SeBlock{LinearLayer::make(2 * channels, hidden, rng), LinearLayer::make(hidden, channels, rng)};
}

Tensor SeBlock::weights(const Tensor& interaction, GateHook hook) const {
  const std::size_t n = interaction.dim(0), c = interaction.dim(1);
  const Tensor gap = reshape(global_avg_pool(interaction), Shape{n, c});
  const Tensor gmp = reshape(global_max_pool(interaction), Shape{n, c});
  const Tensor hidden = relu(fc1.forward(concat({gap, gmp}, 1)));
  const Tensor logits = apply_gate_hook(fc2.forward(hidden), hook);
  return reshape(sigmoid(logits), Shape{n, c, 1, 1});
}

void SeBlock::parameters(const std::string& prefix, ParameterList& out) const {
  fc1.parameters(prefix + ".fc1", out);
  fc2.parameters(prefix + ".fc2", out);
}

Dawim::Dawim(std::size_t channels, DawimVariant variant, Rng& rng) : channels_(channels), variant_(variant) {
  std::array<Strategy, 4> strategy{};
  switch (variant) {
    case DawimVariant::difference:
      strategy.fill(Strategy::difference);
      break;
    case DawimVariant::conv211:
      strategy.fill(Strategy::temporal211);
      break;
    case DawimVariant::conv233:
      strategy.fill(Strategy::temporal233);
      break;
    default:
      strategy = {Strategy::temporal233, Strategy::temporal211, Strategy::temporal211, Strategy::difference};
  }
  for (std::size_t b = 0; b < 4; ++b) {
    Band& band = bands_[b];
    band.strategy = strategy[b];
    switch (band.strategy) {
      case Strategy::temporal233:
        band.temporal = Conv3dLayer::make(channels, channels, 2, 3, 1, rng);
        break;
      case Strategy::temporal211:
        band.temporal = Conv3dLayer::make(channels, channels, 2, 1, 0, rng);
        break;
      case Strategy::difference:
        band.diff_conv = Conv2dLayer::make(channels, channels, 1, 1, 0, false, rng);
        band.diff_bn = BatchNorm2dLayer::make(channels);
        break;
    }
    if (variant != DawimVariant::no_se) band.se = SeBlock::make(channels, rng);
  }
}

Tensor Dawim::interact_temporal(const Conv3dLayer& conv, const Tensor& x1, const Tensor& x2) {
  const Shape& s = x1.shape();
  const Shape inflated{s[0], s[1], 1, s[2], s[3]};
  const Tensor stacked = concat({reshape(x1, inflated), reshape(x2, inflated)}, 2);
  const Tensor y = conv.forward(stacked);  // [N, C, 1, h, w]
  return reshape(y, Shape{s[0], y.dim(1), s[2], s[3]});
}

Tensor Dawim::interact_difference(const Conv2dLayer& conv, BatchNorm2dLayer& bn, const Tensor& x1,
                                  const Tensor& x2, bool training) {
  return relu(bn.forward(conv.forward(abs(sub(x1, x2))), training));
}

Tensor Dawim::interact(Subband which, const Tensor& x1, const Tensor& x2, bool training) {
  if (x1.shape() != x2.shape())
    throw ShapeError("dawim: temporal band shapes differ: " + to_string(x1.shape()) + " vs " +
                     to_string(x2.shape()));
  Band& band = bands_[static_cast<std::size_t>(which)];
  if (band.strategy == Strategy::difference)
    return interact_difference(band.diff_conv, band.diff_bn, x1, x2, training);
  return interact_temporal(band.temporal, x1, x2);
}

Tensor Dawim::update(Subband which, const Tensor& interaction, const Tensor& original) const {
  if (variant_ == DawimVariant::no_se) return interaction;
  const Tensor w = bands_[static_cast<std::size_t>(which)].se.weights(interaction, gate_hook);
  return hadamard(w, original);
}

Tensor Dawim::modulate(Subband which, const Tensor& interaction, const Tensor& original) const {
  const Tensor delta = update(which, interaction, original);
  if (variant_ == DawimVariant::no_residual) return delta;
  return add(delta, original);
}

std::pair<Tensor, Tensor> Dawim::forward(const Tensor& f1, const Tensor& f2, bool training) {
  if (f1.rank() != 4 || f1.shape() != f2.shape())
    throw ShapeError("dawim: expected two equal [N,C,H,W] maps, got " + to_string(f1.shape()) + " and " +
                     to_string(f2.shape()));
  if (f1.dim(1) != channels_)
    throw ShapeError("dawim: built for " + std::to_string(channels_) + " channels, got " +
                     to_string(f1.shape()));
  const WaveletSubbands a = dwt2_haar(f1);
  const WaveletSubbands b = dwt2_haar(f2);
  const Tensor* a_bands[4] = {&a.ll, &a.lh, &a.hl, &a.hh};
  const Tensor* b_bands[4] = {&b.ll, &b.lh, &b.hl, &b.hh};
  std::array<Tensor, 4> d1, d2;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto which = static_cast<Subband>(i);
    const Tensor tilde = interact(which, *a_bands[i], *b_bands[i], training);
    d1[i] = update(which, tilde, *a_bands[i]);
    d2[i] = update(which, tilde, *b_bands[i]);
  }
  // The band residual is added after the inverse transform: by linearity
  // idwt(d + x) = idwt(d) + f, and f passes through without round-off.
  Tensor out1 = idwt2_haar({d1[0], d1[1], d1[2], d1[3]});
  Tensor out2 = idwt2_haar({d2[0], d2[1], d2[2], d2[3]});
  if (variant_ == DawimVariant::no_residual) return {out1, out2};
  return {add(f1, out1), add(f2, out2)};
}

void Dawim::parameters(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < 4; ++i) {
    const Band& band = bands_[i];
    const std::string p = prefix + "." + kBandNames[i];
    if (band.strategy == Strategy::difference) {
      band.diff_conv.parameters(p + ".diff_conv", out);
      band.diff_bn.parameters(p + ".diff_bn", out);
    } else {
      band.temporal.parameters(p + ".temporal", out);
    }
    if (variant_ != DawimVariant::no_se) band.se.parameters(p + ".se", out);
  }
}

void Dawim::buffers(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < 4; ++i)
    if (bands_[i].strategy == Strategy::difference)
      bands_[i].diff_bn.buffers(prefix + "." + kBandNames[i] + ".diff_bn", out);
}

}  // namespace fsg
