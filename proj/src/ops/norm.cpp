#include <cmath>
#include <string>

#include "fsg/detail/autograd.hpp"
#include "fsg/ops.hpp"

namespace fsg {

BatchNormStats BatchNormStats::init(std::size_t channels) {
  return BatchNormStats{Tensor::zeros(Shape{channels}), Tensor::full(Shape{channels}, 1.0)};
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, bool training, double eps, double momentum) {
  if (input.rank() != 4) throw ShapeError("batchnorm2d: expected [N,C,H,W], got " + to_string(input.shape()));
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  const Shape per_channel{c};
  if (gamma.shape() != per_channel || beta.shape() != per_channel ||
      stats.running_mean.shape() != per_channel || stats.running_var.shape() != per_channel)
    throw ShapeError("batchnorm2d: per-channel parameters must have shape " + to_string(per_channel) +
                     ", input " + to_string(input.shape()) + ", gamma " + to_string(gamma.shape()));
  const std::size_t count = n * hw;
  if (training && count < 2)
    throw Error("batchnorm2d: training mode needs more than one value per channel (input " +
                to_string(input.shape()) + ")");

  std::vector<double> mean(c), invstd(c);
  const double* x = input.ptr();
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t img = 0; img < n; ++img) {
        const double* p = x + (img * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t img = 0; img < n; ++img) {
        const double* p = x + (img * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      const double var = v / static_cast<double>(count);
      mean[ch] = mu;
      invstd[ch] = 1.0 / std::sqrt(var + eps);
      auto rm = stats.running_mean.mutable_data();
      auto rv = stats.running_var.mutable_data();
      rm[ch] = (1.0 - momentum) * rm[ch] + momentum * mu;
      rv[ch] = (1.0 - momentum) * rv[ch] +
               momentum * var * static_cast<double>(count) / static_cast<double>(count - 1);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = stats.running_mean[ch];
      invstd[ch] = 1.0 / std::sqrt(stats.running_var[ch] + eps);
    }
  }

  Tensor out(input.shape());
  Tensor xhat(input.shape());
  double* y = out.mutable_ptr();
  double* xh = xhat.mutable_ptr();
  for (std::size_t img = 0; img < n; ++img)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (img * c + ch) * hw;
      const double g = gamma[ch], b = beta[ch], mu = mean[ch], is = invstd[ch];
      for (std::size_t i = 0; i < hw; ++i) {
        xh[base + i] = (x[base + i] - mu) * is;
        y[base + i] = g * xh[base + i] + b;
      }
    }
  detail::check_finite(out, "batchnorm2d");

  auto in_impl = input.impl();
  auto g_impl = gamma.impl();
  auto b_impl = beta.impl();
  detail::record(out, {&input, &gamma, &beta}, [=](const TensorImpl& o) {
    double* gx = detail::grad_ptr(in_impl);
    double* gg = detail::grad_ptr(g_impl);
    double* gb = detail::grad_ptr(b_impl);
    const double* dy = o.grad.data();
    const double* xh_ = xhat.ptr();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (std::size_t img = 0; img < n; ++img) {
        const std::size_t base = (img * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_dy += dy[base + i];
          sum_dy_xh += dy[base + i] * xh_[base + i];
        }
      }
      if (gg != nullptr) gg[ch] += sum_dy_xh;
      if (gb != nullptr) gb[ch] += sum_dy;
      if (gx == nullptr) continue;
      const double g = g_impl->data[ch];
      const double is = invstd[ch];
      if (training) {
        const double m = static_cast<double>(count);
        const double k = g * is / m;
        for (std::size_t img = 0; img < n; ++img) {
          const std::size_t base = (img * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i)
            gx[base + i] += k * (m * dy[base + i] - sum_dy - xh_[base + i] * sum_dy_xh);
        }
      } else {
        for (std::size_t img = 0; img < n; ++img) {
          const std::size_t base = (img * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) gx[base + i] += dy[base + i] * g * is;
        }
      }
    }
  });
  return out;
}

}  // namespace fsg
