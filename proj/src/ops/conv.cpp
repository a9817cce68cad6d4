#include <algorithm>
#include <cstring>
#include <string>

#include "fsg/detail/autograd.hpp"
#include "fsg/kernels.hpp"
#include "fsg/ops.hpp"

namespace fsg {

std::size_t& flop_counter_ref() {
  thread_local std::size_t flops = 0;
  return flops;
}

namespace {

struct Geometry {
  std::size_t height, width;  // source plane
  std::size_t kh, kw;
  std::size_t stride, pad;
  std::size_t out_h, out_w;
};

// Unrolls `planes` (each height x width) into col[(plane, ki, kj) x (oy, ox)].
void im2col(const std::vector<const double*>& planes, const Geometry& g, double* col) {
  const std::size_t cols = g.out_h * g.out_w;
  std::size_t row = 0;
  for (const double* src : planes) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj, ++row) {
        double* dst = col + row * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          double* drow = dst + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(drow, drow + g.out_w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            drow[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0 : srow[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters col back into `planes`, accumulating.
void col2im(const double* col, const Geometry& g, const std::vector<double*>& planes) {
  const std::size_t cols = g.out_h * g.out_w;
  std::size_t row = 0;
  for (double* dst : planes) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj, ++row) {
        const double* src = col + row * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          double* drow = dst + static_cast<std::size_t>(iy) * g.width;
          const double* srow = src + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.width)) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

// One output "image" of a convolution expressed as GEMM:
//   out[Co x P] = W[Co x K] * col[K x P] (+ bias)
// where the K rows of col come from `planes`. Shared by conv2d and conv3d.
struct ConvProblem {
  std::size_t out_channels;
  std::size_t k;  // planes * kh * kw
  Geometry geom;
  bool direct;  // 1x1 stride-1 unpadded over one contiguous block: col == input
};

void conv_forward_one(const ConvProblem& p, const std::vector<const double*>& planes,
                      const double* weight, const double* bias, double* out,
                      std::vector<double>& scratch) {
  const std::size_t cols = p.geom.out_h * p.geom.out_w;
  const double* col = planes.front();
  if (!p.direct) {
    scratch.resize(p.k * cols);
    im2col(planes, p.geom, scratch.data());
    col = scratch.data();
  }
  kernels::gemm(false, false, p.out_channels, cols, p.k, 1.0, weight, p.k, col, cols, 0.0, out, cols);
  if (bias != nullptr)
    for (std::size_t o = 0; o < p.out_channels; ++o) {
      double* row = out + o * cols;
      const double b = bias[o];
      for (std::size_t j = 0; j < cols; ++j) row[j] += b;
    }
  flop_counter_ref() += 2 * p.out_channels * cols * p.k;
}

void conv_backward_one(const ConvProblem& p, const std::vector<const double*>& planes,
                       const std::vector<double*>& grad_planes, const double* weight,
                       const double* grad_out, double* grad_weight, double* grad_bias,
                       std::vector<double>& scratch) {
  const std::size_t cols = p.geom.out_h * p.geom.out_w;
  if (grad_weight != nullptr) {
    const double* col = planes.front();
    if (!p.direct) {
      scratch.resize(p.k * cols);
      im2col(planes, p.geom, scratch.data());
      col = scratch.data();
    }
    kernels::gemm(false, true, p.out_channels, p.k, cols, 1.0, grad_out, cols, col, cols, 1.0,
                  grad_weight, p.k);
  }
  if (grad_bias != nullptr)
    for (std::size_t o = 0; o < p.out_channels; ++o) grad_bias[o] += kernels::sum(cols, grad_out + o * cols);
  if (!grad_planes.empty()) {
    if (p.direct) {
      kernels::gemm(true, false, p.k, cols, p.out_channels, 1.0, weight, p.k, grad_out, cols, 1.0,
                    grad_planes.front(), cols);
    } else {
      scratch.resize(p.k * cols);
      kernels::gemm(true, false, p.k, cols, p.out_channels, 1.0, weight, p.k, grad_out, cols, 0.0,
                    scratch.data(), cols);
      col2im(scratch.data(), p.geom, grad_planes);
    }
  }
}

void check_bias(const Tensor& bias, std::size_t out_channels, const char* op) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_channels))
    throw ShapeError(std::string(op) + ": bias shape " + to_string(bias.shape()) +
                     " does not match " + std::to_string(out_channels) + " output channels");
}

}  // namespace

std::size_t flop_counter() { return flop_counter_ref(); }
void reset_flop_counter() { flop_counter_ref() = 0; }

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw ShapeError("conv2d: expected input [N,C,H,W] and kernel [C',C,kh,kw], got " +
                     to_string(input.shape()) + " and " + to_string(kernel.shape()));
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != c)
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " expects " +
                     std::to_string(kernel.dim(1)) + " input channels but input " +
                     to_string(input.shape()) + " has " + std::to_string(c));
  if (h + 2 * padding < kh || w + 2 * padding < kw)
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " larger than padded input " +
                     to_string(input.shape()));
  check_bias(bias, co, "conv2d");

  ConvProblem p;
  p.out_channels = co;
  p.k = c * kh * kw;
  p.geom = Geometry{h, w, kh, kw, stride, padding, (h + 2 * padding - kh) / stride + 1,
                    (w + 2 * padding - kw) / stride + 1};
  p.direct = kh == 1 && kw == 1 && stride == 1 && padding == 0;
  const std::size_t out_plane = p.geom.out_h * p.geom.out_w;

  Tensor out(Shape{n, co, p.geom.out_h, p.geom.out_w});
  std::vector<double> scratch;
  auto planes_of = [c, h, w](const double* base, std::size_t img) {
    std::vector<const double*> planes(c);
    for (std::size_t ch = 0; ch < c; ++ch) planes[ch] = base + (img * c + ch) * h * w;
    return planes;
  };
  for (std::size_t img = 0; img < n; ++img)
    conv_forward_one(p, planes_of(input.ptr(), img), kernel.ptr(),
                     bias.defined() ? bias.ptr() : nullptr, out.mutable_ptr() + img * co * out_plane,
                     scratch);
  detail::check_finite(out, "conv2d");

  auto in_impl = input.impl();
  auto k_impl = kernel.impl();
  auto b_impl = bias.defined() ? bias.impl() : nullptr;
  detail::record(out, {&input, &kernel, &bias}, [=](const TensorImpl& o) {
    double* gx = detail::grad_ptr(in_impl);
    double* gw = detail::grad_ptr(k_impl);
    double* gb = detail::grad_ptr(b_impl);
    std::vector<double> scratch_b;
    for (std::size_t img = 0; img < n; ++img) {
      std::vector<const double*> planes(c);
      std::vector<double*> grad_planes;
      for (std::size_t ch = 0; ch < c; ++ch) planes[ch] = in_impl->data.data() + (img * c + ch) * h * w;
      if (gx != nullptr) {
        grad_planes.resize(c);
        for (std::size_t ch = 0; ch < c; ++ch) grad_planes[ch] = gx + (img * c + ch) * h * w;
      }
      conv_backward_one(p, planes, grad_planes, k_impl->data.data(),
                        o.grad.data() + img * co * out_plane, gw, gb, scratch_b);
    }
  });
  return out;
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t padding_spatial) {
  if (input.rank() != 5 || kernel.rank() != 5)
    throw ShapeError("conv3d: expected input [N,C,D,H,W] and kernel [C',C,kd,kh,kw], got " +
                     to_string(input.shape()) + " and " + to_string(kernel.shape()));
  const std::size_t n = input.dim(0), c = input.dim(1), d = input.dim(2), h = input.dim(3),
                    w = input.dim(4);
  const std::size_t co = kernel.dim(0), kd = kernel.dim(2), kh = kernel.dim(3), kw = kernel.dim(4);
  if (kernel.dim(1) != c)
    throw ShapeError("conv3d: kernel " + to_string(kernel.shape()) + " expects " +
                     std::to_string(kernel.dim(1)) + " input channels but input " +
                     to_string(input.shape()) + " has " + std::to_string(c));
  if (kd > d)
    throw ShapeError("conv3d: kernel depth " + std::to_string(kd) + " exceeds input depth " +
                     std::to_string(d) + " (kernel " + to_string(kernel.shape()) + ", input " +
                     to_string(input.shape()) + ")");
  if (h + 2 * padding_spatial < kh || w + 2 * padding_spatial < kw)
    throw ShapeError("conv3d: kernel " + to_string(kernel.shape()) + " larger than padded input " +
                     to_string(input.shape()));
  check_bias(bias, co, "conv3d");

  const std::size_t od = d - kd + 1;
  ConvProblem p;
  p.out_channels = co;
  p.k = c * kd * kh * kw;
  p.geom = Geometry{h, w, kh, kw, 1, padding_spatial, h + 2 * padding_spatial - kh + 1,
                    w + 2 * padding_spatial - kw + 1};
  p.direct = false;
  const std::size_t out_plane = p.geom.out_h * p.geom.out_w;
  const std::size_t plane = h * w;

  // Output layout [N, C', D', H', W']: the (o, z) slab for fixed z is strided
  // by D' planes, so compute into a contiguous buffer and scatter.
  auto plane_index = [=](std::size_t img, std::size_t ch, std::size_t z) {
    return ((img * c + ch) * d + z) * plane;
  };
  Tensor out(Shape{n, co, od, p.geom.out_h, p.geom.out_w});
  std::vector<double> scratch, slab(co * out_plane);
  for (std::size_t img = 0; img < n; ++img) {
    for (std::size_t z = 0; z < od; ++z) {
      std::vector<const double*> planes;
      planes.reserve(c * kd);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t t = 0; t < kd; ++t) planes.push_back(input.ptr() + plane_index(img, ch, z + t));
      conv_forward_one(p, planes, kernel.ptr(), bias.defined() ? bias.ptr() : nullptr, slab.data(),
                       scratch);
      for (std::size_t o = 0; o < co; ++o)
        std::memcpy(out.mutable_ptr() + ((img * co + o) * od + z) * out_plane, slab.data() + o * out_plane,
                    out_plane * sizeof(double));
    }
  }
  detail::check_finite(out, "conv3d");

  auto in_impl = input.impl();
  auto k_impl = kernel.impl();
  auto b_impl = bias.defined() ? bias.impl() : nullptr;
  detail::record(out, {&input, &kernel, &bias}, [=](const TensorImpl& o) {
    double* gx = detail::grad_ptr(in_impl);
    double* gw = detail::grad_ptr(k_impl);
    double* gb = detail::grad_ptr(b_impl);
    std::vector<double> scratch_b, gslab(co * out_plane);
    for (std::size_t img = 0; img < n; ++img) {
      for (std::size_t z = 0; z < od; ++z) {
        std::vector<const double*> planes;
        std::vector<double*> grad_planes;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t t = 0; t < kd; ++t) {
            planes.push_back(in_impl->data.data() + plane_index(img, ch, z + t));
            if (gx != nullptr) grad_planes.push_back(gx + plane_index(img, ch, z + t));
          }
        for (std::size_t oc = 0; oc < co; ++oc)
          std::memcpy(gslab.data() + oc * out_plane, o.grad.data() + ((img * co + oc) * od + z) * out_plane,
                      out_plane * sizeof(double));
        conv_backward_one(p, planes, grad_planes, k_impl->data.data(), gslab.data(), gw, gb, scratch_b);
      }
    }
  });
  return out;
}

}  // namespace fsg
