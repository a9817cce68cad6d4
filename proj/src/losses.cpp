#include <cmath>

#include "fsg/detail/autograd.hpp"
#include "fsg/network.hpp"

namespace fsg {

namespace {

void check_label(const Tensor& logits, const Tensor& label, const char* op) {
  if (logits.shape() != label.shape())
    throw ShapeError(std::string(op) + ": logits " + to_string(logits.shape()) + " vs label " +
                     to_string(label.shape()));
  for (const double y : label.data())
    if (y != 0.0 && y != 1.0)
      throw Error(std::string(op) + ": label value " + std::to_string(y) + " is not 0 or 1");
}

double sigmoid_of(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor bce_loss(const Tensor& logits, const Tensor& label) {
  check_label(logits, label, "bce_loss");
  const std::size_t m = logits.numel();
  // -[y log s(z) + (1-y) log(1-s(z))] = max(z,0) - z y + log1p(exp(-|z|))
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double z = logits[i], y = label[i];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(m));
  detail::check_finite(out, "bce_loss");
  auto z_impl = logits.impl();
  auto y_impl = label.impl();
  detail::record(out, {&logits}, [=](const TensorImpl& res) {
    double* gz = detail::grad_ptr(z_impl);
    if (gz == nullptr) return;
    const double scale = res.grad[0] / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) gz[i] += scale * (sigmoid_of(z_impl->data[i]) - y_impl->data[i]);
  });
  return out;
}

Tensor dice_loss(const Tensor& logits, const Tensor& label) {
  check_label(logits, label, "dice_loss");
  const std::size_t m = logits.numel();
  double inter = 0.0, psum = 0.0, ysum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double p = sigmoid_of(logits[i]);
    inter += p * label[i];
    psum += p;
    ysum += label[i];
  }
  const double num = 2.0 * inter + kDiceSmoothing;
  const double den = psum + ysum + kDiceSmoothing;
  Tensor out = Tensor::scalar(1.0 - num / den);
  detail::check_finite(out, "dice_loss");
  auto z_impl = logits.impl();
  auto y_impl = label.impl();
  detail::record(out, {&logits}, [=](const TensorImpl& res) {
    double* gz = detail::grad_ptr(z_impl);
    if (gz == nullptr) return;
    // d/dp_k [1 - num/den] = -(2 y_k den - num) / den^2
    const double g = res.grad[0];
    for (std::size_t i = 0; i < m; ++i) {
      const double p = sigmoid_of(z_impl->data[i]);
      const double dp = -(2.0 * y_impl->data[i] * den - num) / (den * den);
      gz[i] += g * dp * p * (1.0 - p);
    }
  });
  return out;
}

Tensor total_loss(const Tensor& logits, const Tensor& label) {
  return add(bce_loss(logits, label), dice_loss(logits, label));
}

}  // namespace fsg
