#pragma once

// Wavelet-domain interaction between the two temporal feature maps at one
// encoder scale. Both maps are split into Haar sub-bands; each band pair is
// fused into one interaction map, squeeze-excited into channel weights, and
// those weights re-scale each time's own band before the inverse transform.

#include <array>
#include <cstddef>
#include <string>
#include <utility>

#include "fsg/layers.hpp"
#include "fsg/wavelet.hpp"

namespace fsg {

enum class DawimVariant {
  full,         // LL: 2x3x3 temporal conv, LH/HL: 2x1x1, HH: |difference| path
  difference,   // |difference| path on every band (baseline interaction)
  conv211,      // 2x1x1 temporal conv on every band
  conv233,      // 2x3x3 temporal conv on every band
  no_se,        // full interactions, band output = interaction + original
  no_residual,  // full interactions, band output = weight * original
};

enum class Subband { ll = 0, lh = 1, hl = 2, hh = 3 };

const char* to_string(DawimVariant v);
DawimVariant parse_dawim_variant(const std::string& s);  // "off" selects difference

// Reduction ratio actually used for `channels`: min(16, max(1, C / 4)).
std::size_t se_reduction(std::size_t channels);

// Channel gate from an interaction map: sigmoid(W2 relu(W1 [GAP; MAP] + b1) + b2).
struct SeBlock {
  LinearLayer fc1;  // 2C -> C / r
  LinearLayer fc2;  // C / r -> C

  static SeBlock make(std::size_t channels, Rng& rng);
  // Returns [N, C, 1, 1] weights.
  Tensor weights(const Tensor& interaction, GateHook hook) const;
  void parameters(const std::string& prefix, ParameterList& out) const;
};

class Dawim {
 public:
  Dawim(std::size_t channels, DawimVariant variant, Rng& rng);

  std::size_t channels() const { return channels_; }
  DawimVariant variant() const { return variant_; }

  // Interaction map for one band pair; shape matches the inputs.
  Tensor interact(Subband band, const Tensor& x1, const Tensor& x2, bool training);
  // Temporal-conv strategy: stack the pair on a depth-2 axis and collapse it.
  static Tensor interact_temporal(const Conv3dLayer& conv, const Tensor& x1, const Tensor& x2);
  // Difference strategy: relu(BN(conv1x1(|x1 - x2|))).
  static Tensor interact_difference(const Conv2dLayer& conv, BatchNorm2dLayer& bn, const Tensor& x1,
                                    const Tensor& x2, bool training);

  // Band output: the gated update of `update` plus the band residual.
  Tensor modulate(Subband band, const Tensor& interaction, const Tensor& original) const;

  std::pair<Tensor, Tensor> forward(const Tensor& f1, const Tensor& f2, bool training);

  // Band update before the residual: w * original, or the raw interaction
  // without SE.
  Tensor update(Subband band, const Tensor& interaction, const Tensor& original) const;

  void parameters(const std::string& prefix, ParameterList& out) const;
  void buffers(const std::string& prefix, ParameterList& out) const;

  // Pins every SE gate; used to check the residual identity.
  GateHook gate_hook = GateHook::none;

 private:
  enum class Strategy { temporal233, temporal211, difference };
  struct Band {
    Strategy strategy;
    Conv3dLayer temporal;
    Conv2dLayer diff_conv;
    BatchNorm2dLayer diff_bn;
    SeBlock se;
  };

  std::size_t channels_;
  DawimVariant variant_;
  std::array<Band, 4> bands_;
};

}  // namespace fsg
