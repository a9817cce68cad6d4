#include "fsg/layers.hpp"

#include <cmath>

namespace fsg {

Tensor apply_gate_hook(const Tensor& logits, GateHook hook) {
  switch (hook) {
    case GateHook::none:
      return logits;
    case GateHook::closed:
      return Tensor::full(logits.shape(), -kGateHookLogit);
    case GateHook::open:
      return Tensor::full(logits.shape(), kGateHookLogit);
  }
  return logits;
}

Tensor he_normal(const Shape& shape, Rng& rng) {
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Tensor t(shape);
  for (auto& v : t.mutable_data()) v = rng.normal(0.0, stddev);
  t.set_requires_grad(true);
  return t;
}

void add_param(ParameterList& out, const std::string& name, const Tensor& t) {
  if (t.defined()) out.push_back(Parameter{name, t});
}

Conv2dLayer Conv2dLayer::make(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                              std::size_t padding, bool with_bias, Rng& rng) {
  Conv2dLayer layer;
  layer.weight = he_normal(Shape{out, in, kernel, kernel}, rng);
  if (with_bias) layer.bias = Tensor::zeros(Shape{out}).set_requires_grad(true);
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

void Conv2dLayer::parameters(const std::string& prefix, ParameterList& out) const {
  add_param(out, prefix + ".weight", weight);
  add_param(out, prefix + ".bias", bias);
}

Conv3dLayer Conv3dLayer::make(std::size_t in, std::size_t out, std::size_t depth, std::size_t kernel,
                              std::size_t padding, Rng& rng) {
  Conv3dLayer layer;
  layer.weight = he_normal(Shape{out, in, depth, kernel, kernel}, rng);
  layer.bias = Tensor::zeros(Shape{out}).set_requires_grad(true);
  layer.padding = padding;
  return layer;
}

void Conv3dLayer::parameters(const std::string& prefix, ParameterList& out) const {
  add_param(out, prefix + ".weight", weight);
  add_param(out, prefix + ".bias", bias);
}

BatchNorm2dLayer BatchNorm2dLayer::make(std::size_t channels) {
  BatchNorm2dLayer layer;
  layer.gamma = Tensor::full(Shape{channels}, 1.0).set_requires_grad(true);
  layer.beta = Tensor::zeros(Shape{channels}).set_requires_grad(true);
  layer.stats = BatchNormStats::init(channels);
  return layer;
}

void BatchNorm2dLayer::parameters(const std::string& prefix, ParameterList& out) const {
  add_param(out, prefix + ".gamma", gamma);
  add_param(out, prefix + ".beta", beta);
}

void BatchNorm2dLayer::buffers(const std::string& prefix, ParameterList& out) const {
  add_param(out, prefix + ".running_mean", stats.running_mean);
  add_param(out, prefix + ".running_var", stats.running_var);
}

LinearLayer LinearLayer::make(std::size_t in, std::size_t out, Rng& rng) {
  LinearLayer layer;
  layer.weight = he_normal(Shape{out, in}, rng);
  layer.bias = Tensor::zeros(Shape{out}).set_requires_grad(true);
  return layer;
}

void LinearLayer::parameters(const std::string& prefix, ParameterList& out) const {
  add_param(out, prefix + ".weight", weight);
  add_param(out, prefix + ".bias", bias);
}

}  // namespace fsg
