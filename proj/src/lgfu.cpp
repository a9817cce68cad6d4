#include "fsg/lgfu.hpp"

namespace fsg {

Lgfu::Lgfu(std::size_t deep_channels, std::size_t shallow_channels, bool gated, Rng& rng)
    : deep_channels_(deep_channels), shallow_channels_(shallow_channels), gated_(gated) {
  align = Conv2dLayer::make(deep_channels, shallow_channels, 1, 1, 0, true, rng);
  if (gated) {
    gate_conv = Conv2dLayer::make(2 * shallow_channels, shallow_channels, 3, 1, 1, false, rng);
    gate_bn = BatchNorm2dLayer::make(shallow_channels);
    gate_out = Conv2dLayer::make(shallow_channels, 1, 1, 1, 0, true, rng);
  }
}

Tensor Lgfu::align_deep(const Tensor& f_deep) const {
  if (f_deep.rank() != 4 || f_deep.dim(1) != deep_channels_)
    throw ShapeError("lgfu: deep map must be [N," + std::to_string(deep_channels_) + ",h,w], got " +
                     to_string(f_deep.shape()));
  return align.forward(bilinear_upsample_x2(f_deep));
}

Tensor Lgfu::gating_unit(const Tensor& deep_aligned, const Tensor& f_shallow, bool training) {
  if (deep_aligned.shape() != f_shallow.shape())
    throw ShapeError("lgfu gate: aligned deep " + to_string(deep_aligned.shape()) + " vs shallow " +
                     to_string(f_shallow.shape()));
  const Tensor hidden = relu(gate_bn.forward(gate_conv.forward(concat({deep_aligned, f_shallow}, 1)), training));
  return sigmoid(apply_gate_hook(gate_out.forward(hidden), gate_hook));
}

Tensor Lgfu::fuse(const Tensor& f_deep, const Tensor& f_shallow, bool training, Tensor* gate) {
  if (f_shallow.rank() != 4 || f_deep.rank() != 4 || f_shallow.dim(2) != 2 * f_deep.dim(2) ||
      f_shallow.dim(3) != 2 * f_deep.dim(3) || f_shallow.dim(0) != f_deep.dim(0))
    throw ShapeError("lgfu: shallow map must have exactly twice the deep resolution, got deep " +
                     to_string(f_deep.shape()) + " and shallow " + to_string(f_shallow.shape()));
  if (f_shallow.dim(1) != shallow_channels_)
    throw ShapeError("lgfu: shallow map must have " + std::to_string(shallow_channels_) + " channels, got " +
                     to_string(f_shallow.shape()));
  const Tensor deep = align_deep(f_deep);
  if (!gated_) return add(f_shallow, deep);
  const Tensor g = gating_unit(deep, f_shallow, training);
  if (gate != nullptr) *gate = g;
  return add(hadamard(g, f_shallow), deep);
}

void Lgfu::parameters(const std::string& prefix, ParameterList& out) const {
  align.parameters(prefix + ".align", out);
  if (gated_) {
    gate_conv.parameters(prefix + ".gate_conv", out);
    gate_bn.parameters(prefix + ".gate_bn", out);
    gate_out.parameters(prefix + ".gate_out", out);
  }
}

void Lgfu::buffers(const std::string& prefix, ParameterList& out) const {
  if (gated_) gate_bn.buffers(prefix + ".gate_bn", out);
}

}  // namespace fsg
