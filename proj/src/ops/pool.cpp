#include <algorithm>
#include <limits>
#include <string>

#include "fsg/detail/autograd.hpp"
#include "fsg/grad_check.hpp"
#include "fsg/ops.hpp"

namespace fsg {

namespace {

void require_nchw(const Tensor& x, const char* op) {
  if (x.rank() != 4) throw ShapeError(std::string(op) + ": expected [N,C,H,W], got " + to_string(x.shape()));
}

}  // namespace

Tensor global_avg_pool(const Tensor& x) {
  require_nchw(x, "global_avg_pool");
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out(Shape{x.dim(0), x.dim(1), 1, 1});
  const double inv = 1.0 / static_cast<double>(hw);
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    const double* src = x.ptr() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) s += src[i];
    out[p] = s * inv;
  }
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* gx = detail::grad_ptr(x_impl);
    if (gx == nullptr) return;
    for (std::size_t p = 0; p < planes; ++p) {
      const double g = res.grad[p] * inv;
      for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += g;
    }
  });
  return out;
}

Tensor global_max_pool(const Tensor& x) {
  require_nchw(x, "global_max_pool");
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out(Shape{x.dim(0), x.dim(1), 1, 1});
  std::vector<std::size_t> argmax(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.ptr() + p * hw;
    argmax[p] = static_cast<std::size_t>(std::max_element(src, src + hw) - src);
    out[p] = src[argmax[p]];
  }
  if (BranchProbe* probe = detail::active_branch_probe())
    for (const std::size_t i : argmax) probe->note(i);
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* gx = detail::grad_ptr(x_impl);
    if (gx == nullptr) return;
    for (std::size_t p = 0; p < planes; ++p) gx[p * hw + argmax[p]] += res.grad[p];
  });
  return out;
}

Tensor avg_pool_h(const Tensor& x) {
  require_nchw(x, "avg_pool_h");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out(Shape{x.dim(0), x.dim(1), h, 1});
  const double inv = 1.0 / static_cast<double>(w);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < h; ++r) {
      const double* row = x.ptr() + (p * h + r) * w;
      double s = 0.0;
      for (std::size_t j = 0; j < w; ++j) s += row[j];
      out[p * h + r] = s * inv;
    }
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* gx = detail::grad_ptr(x_impl);
    if (gx == nullptr) return;
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t r = 0; r < h; ++r) {
        const double g = res.grad[p * h + r] * inv;
        double* row = gx + (p * h + r) * w;
        for (std::size_t j = 0; j < w; ++j) row[j] += g;
      }
  });
  return out;
}

Tensor avg_pool_w(const Tensor& x) {
  require_nchw(x, "avg_pool_w");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out(Shape{x.dim(0), x.dim(1), 1, w});
  const double inv = 1.0 / static_cast<double>(h);
  for (std::size_t p = 0; p < planes; ++p) {
    double* o = out.mutable_ptr() + p * w;
    for (std::size_t r = 0; r < h; ++r) {
      const double* row = x.ptr() + (p * h + r) * w;
      for (std::size_t j = 0; j < w; ++j) o[j] += row[j];
    }
    for (std::size_t j = 0; j < w; ++j) o[j] *= inv;
  }
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* gx = detail::grad_ptr(x_impl);
    if (gx == nullptr) return;
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t r = 0; r < h; ++r) {
        double* row = gx + (p * h + r) * w;
        for (std::size_t j = 0; j < w; ++j) row[j] += res.grad[p * w + j] * inv;
      }
  });
  return out;
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  require_nchw(x, "max_pool2d");
  if (kernel == 0 || stride == 0 || 2 * padding >= kernel + 1)
    throw ShapeError("max_pool2d: invalid kernel/stride/padding");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h + 2 * padding < kernel || w + 2 * padding < kernel)
    throw ShapeError("max_pool2d: window larger than padded input " + to_string(x.shape()));
  const std::size_t oh = (h + 2 * padding - kernel) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kernel) / stride + 1;
  Tensor out(Shape{x.dim(0), x.dim(1), oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.ptr() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const std::size_t i = static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
            if (src[i] > best) {
              best = src[i];
              best_i = i;
            }
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = best;
        argmax[o] = p * h * w + best_i;
      }
  }
  if (BranchProbe* probe = detail::active_branch_probe())
    for (const std::size_t i : argmax) probe->note(i);
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* gx = detail::grad_ptr(x_impl);
    if (gx == nullptr) return;
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += res.grad[o];
  });
  return out;
}

}  // namespace fsg
