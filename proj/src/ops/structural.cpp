#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "fsg/detail/autograd.hpp"
#include "fsg/kernels.hpp"
#include "fsg/ops.hpp"

namespace fsg {

std::size_t& flop_counter_ref();

namespace {

// (outer, axis, inner) factorization of a shape around one axis.
struct AxisSplit {
  std::size_t outer = 1, axis = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.axis = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis) {
  if (tensors.empty()) throw ShapeError("concat: no tensors");
  const Shape& first = tensors.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : tensors) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) ok = false;
    if (!ok)
      throw ShapeError("concat: shapes " + to_string(first) + " and " + to_string(s) +
                       " differ off axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
  }
  Tensor out(out_shape);
  const AxisSplit os = split_at(out_shape, axis);
  const std::size_t out_row = os.axis * os.inner;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    offsets.push_back(offset);
    const std::size_t row = t.dim(axis) * os.inner;
    for (std::size_t o = 0; o < os.outer; ++o)
      std::memcpy(out.mutable_ptr() + o * out_row + offset, t.ptr() + o * row, row * sizeof(double));
    offset += row;
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& t : tensors) impls.push_back(t.impl());
  Tape* tape = Tape::active();
  bool any = false;
  for (const auto& t : tensors) any = any || t.requires_grad();
  if (tape != nullptr && any) {
    out.set_requires_grad(true);
    tape->record(out.impl(), [=](const TensorImpl& res) {
      for (std::size_t k = 0; k < impls.size(); ++k) {
        double* g = detail::grad_ptr(impls[k]);
        if (g == nullptr) continue;
        const std::size_t row = impls[k]->shape[axis] * os.inner;
        for (std::size_t o = 0; o < os.outer; ++o) {
          const double* src = res.grad.data() + o * out_row + offsets[k];
          double* dst = g + o * row;
          for (std::size_t i = 0; i < row; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || length == 0 || start + length > x.dim(axis))
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") invalid on axis " + std::to_string(axis) + " of " + to_string(x.shape()));
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  Tensor out(out_shape);
  const AxisSplit s = split_at(x.shape(), axis);
  const std::size_t in_row = s.axis * s.inner, out_row = length * s.inner, off = start * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o)
    std::memcpy(out.mutable_ptr() + o * out_row, x.ptr() + o * in_row + off, out_row * sizeof(double));
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* g = detail::grad_ptr(x_impl);
    if (g == nullptr) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = res.grad.data() + o * out_row;
      double* dst = g + o * in_row + off;
      for (std::size_t i = 0; i < out_row; ++i) dst[i] += src[i];
    }
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* g = detail::grad_ptr(x_impl);
    if (g != nullptr) kernels::axpy(res.grad.size(), 1.0, res.grad.data(), g);
  });
  return out;
}

Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b) {
  const std::size_t rank = x.rank();
  if (axis_a >= rank || axis_b >= rank)
    throw ShapeError("transpose: axes out of range for " + to_string(x.shape()));
  if (axis_a == axis_b) return reshape(x, x.shape());
  Shape out_shape = x.shape();
  std::swap(out_shape[axis_a], out_shape[axis_b]);
  // Input strides permuted into output order.
  std::vector<std::size_t> in_strides(rank);
  std::size_t s = 1;
  for (std::size_t i = rank; i-- > 0;) {
    in_strides[i] = s;
    s *= x.dim(i);
  }
  std::swap(in_strides[axis_a], in_strides[axis_b]);
  std::vector<std::size_t> map(x.numel());
  {
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < map.size(); ++o) {
      map[o] = src;
      for (std::size_t ax = rank; ax-- > 0;) {
        ++idx[ax];
        src += in_strides[ax];
        if (idx[ax] < out_shape[ax]) break;
        src -= in_strides[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }
  Tensor out(out_shape);
  for (std::size_t o = 0; o < map.size(); ++o) out[o] = x[map[o]];
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* g = detail::grad_ptr(x_impl);
    if (g == nullptr) return;
    for (std::size_t o = 0; o < map.size(); ++o) g[map[o]] += res.grad[o];
  });
  return out;
}

Tensor matmul_batched(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw ShapeError("matmul_batched: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  const std::size_t n = a.dim(0), p = a.dim(1), q = a.dim(2), r = b.dim(2);
  Tensor out(Shape{n, p, r});
  for (std::size_t i = 0; i < n; ++i)
    kernels::gemm(false, false, p, r, q, 1.0, a.ptr() + i * p * q, q, b.ptr() + i * q * r, r, 0.0,
                  out.mutable_ptr() + i * p * r, r);
  flop_counter_ref() += 2 * n * p * q * r;
  detail::check_finite(out, "matmul_batched");
  auto a_impl = a.impl();
  auto b_impl = b.impl();
  detail::record(out, {&a, &b}, [=](const TensorImpl& res) {
    double* ga = detail::grad_ptr(a_impl);
    double* gb = detail::grad_ptr(b_impl);
    for (std::size_t i = 0; i < n; ++i) {
      const double* g = res.grad.data() + i * p * r;
      if (ga != nullptr)
        kernels::gemm(false, true, p, q, r, 1.0, g, r, b_impl->data.data() + i * q * r, r, 1.0,
                      ga + i * p * q, q);
      if (gb != nullptr)
        kernels::gemm(true, false, q, r, p, 1.0, a_impl->data.data() + i * p * q, q, g, r, 1.0,
                      gb + i * q * r, r);
    }
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1))
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(weight.shape()));
  const std::size_t n = x.dim(0), k = x.dim(1), m = weight.dim(0);
  if (bias.defined() && bias.shape() != Shape{m})
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  Tensor out(Shape{n, m});
  kernels::gemm(false, true, n, m, k, 1.0, x.ptr(), k, weight.ptr(), k, 0.0, out.mutable_ptr(), m);
  if (bias.defined())
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bias[j];
  flop_counter_ref() += 2 * n * m * k;
  detail::check_finite(out, "linear");
  auto x_impl = x.impl();
  auto w_impl = weight.impl();
  auto b_impl = bias.defined() ? bias.impl() : nullptr;
  detail::record(out, {&x, &weight, &bias}, [=](const TensorImpl& res) {
    double* gx = detail::grad_ptr(x_impl);
    double* gw = detail::grad_ptr(w_impl);
    double* gb = detail::grad_ptr(b_impl);
    const double* g = res.grad.data();
    if (gx != nullptr) kernels::gemm(false, false, n, k, m, 1.0, g, m, w_impl->data.data(), k, 1.0, gx, k);
    if (gw != nullptr) kernels::gemm(true, false, m, k, n, 1.0, g, m, x_impl->data.data(), k, 1.0, gw, k);
    if (gb != nullptr)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
  });
  return out;
}

namespace {

// Source taps for one output coordinate under half-pixel bilinear sampling.
struct Tap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Tap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0.0) src = 0.0;
    const auto i0 = std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = Tap{i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::size_t factor) {
  if (x.rank() != 4) throw ShapeError("upsample_bilinear: expected [N,C,H,W], got " + to_string(x.shape()));
  if (factor == 0) throw ShapeError("upsample_bilinear: factor must be >= 1");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  const auto ty = bilinear_taps(h, factor);
  const auto tx = bilinear_taps(w, factor);
  Tensor out(Shape{x.dim(0), x.dim(1), oh, ow});
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.ptr() + p * h * w;
    double* dst = out.mutable_ptr() + p * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const Tap& a = ty[oy];
      const double* r0 = src + a.i0 * w;
      const double* r1 = src + a.i1 * w;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const Tap& b = tx[ox];
        const double top = (1.0 - b.w1) * r0[b.i0] + b.w1 * r0[b.i1];
        const double bot = (1.0 - b.w1) * r1[b.i0] + b.w1 * r1[b.i1];
        dst[oy * ow + ox] = (1.0 - a.w1) * top + a.w1 * bot;
      }
    }
  }
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* g = detail::grad_ptr(x_impl);
    if (g == nullptr) return;
    for (std::size_t p = 0; p < planes; ++p) {
      const double* gout = res.grad.data() + p * oh * ow;
      double* gin = g + p * h * w;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const Tap& a = ty[oy];
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const Tap& b = tx[ox];
          const double v = gout[oy * ow + ox];
          gin[a.i0 * w + b.i0] += (1.0 - a.w1) * (1.0 - b.w1) * v;
          gin[a.i0 * w + b.i1] += (1.0 - a.w1) * b.w1 * v;
          gin[a.i1 * w + b.i0] += a.w1 * (1.0 - b.w1) * v;
          gin[a.i1 * w + b.i1] += a.w1 * b.w1 * v;
        }
      }
    }
  });
  return out;
}

}  // namespace fsg
