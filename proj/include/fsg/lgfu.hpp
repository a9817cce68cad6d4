#pragma once

// Gated fusion of a deep (coarse) difference map into the next shallower
// one: the deep map is upsampled x2 and channel-aligned, a single-channel
// sigmoid gate computed from both maps scales the shallow map, and the two
// are summed.

#include <cstddef>
#include <string>

#include "fsg/layers.hpp"

namespace fsg {

class Lgfu {
 public:
  // gated == false gives the plain additive decoder step (aligned deep + shallow).
  Lgfu(std::size_t deep_channels, std::size_t shallow_channels, bool gated, Rng& rng);

  bool gated() const { return gated_; }

  Tensor align_deep(const Tensor& f_deep) const;
  // [N, 1, H, W] gate in (0, 1).
  Tensor gating_unit(const Tensor& deep_aligned, const Tensor& f_shallow, bool training);
  Tensor fuse(const Tensor& f_deep, const Tensor& f_shallow, bool training, Tensor* gate = nullptr);

  void parameters(const std::string& prefix, ParameterList& out) const;
  void buffers(const std::string& prefix, ParameterList& out) const;

  Conv2dLayer align;       // 1x1, Cd -> Cs
  Conv2dLayer gate_conv;   // 3x3, 2Cs -> Cs
  BatchNorm2dLayer gate_bn;
  Conv2dLayer gate_out;    // 1x1, Cs -> 1
  GateHook gate_hook = GateHook::none;

 private:
  std::size_t deep_channels_;
  std::size_t shallow_channels_;
  bool gated_;
};

}  // namespace fsg
