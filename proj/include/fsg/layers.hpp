#pragma once

// Parameter-holding building blocks shared by the network modules.

#include <cstddef>
#include <string>

#include "fsg/ops.hpp"
#include "fsg/rng.hpp"
#include "fsg/tensor.hpp"

namespace fsg {

// Test-only override of a sigmoid gate's pre-activation: `closed` pins it
// far enough negative that the gate underflows to exactly 0, `open` so far
// positive that it rounds to exactly 1.
enum class GateHook { none, closed, open };

inline constexpr double kGateHookLogit = 1000.0;

// Replaces `logits` with the hook constant when a hook is set.
Tensor apply_gate_hook(const Tensor& logits, GateHook hook);

// He-normal initialised weight of the given shape (fan-in from dims 1..).
Tensor he_normal(const Shape& shape, Rng& rng);

void add_param(ParameterList& out, const std::string& name, const Tensor& t);

struct Conv2dLayer {
  Tensor weight;  // [C', C, k, k]
  Tensor bias;    // [C'] or undefined
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv2dLayer make(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                          std::size_t padding, bool with_bias, Rng& rng);
  Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }
  void parameters(const std::string& prefix, ParameterList& out) const;
};

struct Conv3dLayer {
  Tensor weight;  // [C', C, kd, kh, kw]
  Tensor bias;
  std::size_t padding = 0;

  static Conv3dLayer make(std::size_t in, std::size_t out, std::size_t depth, std::size_t kernel,
                          std::size_t padding, Rng& rng);
  Tensor forward(const Tensor& x) const { return conv3d(x, weight, bias, padding); }
  void parameters(const std::string& prefix, ParameterList& out) const;
};

struct BatchNorm2dLayer {
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;

  static BatchNorm2dLayer make(std::size_t channels);
  Tensor forward(const Tensor& x, bool training) { return batchnorm2d(x, gamma, beta, stats, training); }
  void parameters(const std::string& prefix, ParameterList& out) const;
  void buffers(const std::string& prefix, ParameterList& out) const;
};

struct LinearLayer {
  Tensor weight;  // [M, K]
  Tensor bias;    // [M]

  static LinearLayer make(std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void parameters(const std::string& prefix, ParameterList& out) const;
};

}  // namespace fsg
