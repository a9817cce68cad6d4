#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fsg/detail/autograd.hpp"
#include "fsg/grad_check.hpp"
#include "fsg/kernels.hpp"
#include "fsg/ops.hpp"

namespace fsg {

namespace detail {
void check_finite(const Tensor& out, std::string_view op) {
  for (double v : out.data())
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
}
}  // namespace detail

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, const char* name, Forward f, Derivative df) {
  Tensor out(x.shape());
  const double* in = x.ptr();
  double* o = out.mutable_ptr();
  for (std::size_t i = 0; i < x.numel(); ++i) o[i] = f(in[i]);
  detail::check_finite(out, name);
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* gx = detail::grad_ptr(x_impl);
    if (gx == nullptr) return;
    const double* xin = x_impl->data.data();
    for (std::size_t i = 0; i < res.data.size(); ++i) gx[i] += res.grad[i] * df(xin[i], res.data[i]);
  });
  return out;
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;
};

std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
  const std::size_t offset = out.size() - in.size();
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[offset + i] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  return strides;
}

BroadcastPlan plan(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  p.out = broadcast_shape(a, b);
  p.stride_a = aligned_strides(a, p.out);
  p.stride_b = aligned_strides(b, p.out);
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element, in order.
template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t rank = p.out.size();
  const std::size_t inner = p.out.back();
  const std::size_t sa = p.stride_a.back(), sb = p.stride_b.back();
  const std::size_t outer = shape_numel(p.out) / inner;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0, out_i = 0;
  for (std::size_t block = 0; block < outer; ++block) {
    for (std::size_t j = 0; j < inner; ++j) f(out_i + j, oa + j * sa, ob + j * sb);
    out_i += inner;
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      oa += p.stride_a[ax];
      ob += p.stride_b[ax];
      if (idx[ax] < p.out[ax]) break;
      oa -= p.stride_a[ax] * idx[ax];
      ob -= p.stride_b[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

enum class BinaryKind { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind) {
  const char* name = kind == BinaryKind::add ? "add" : kind == BinaryKind::sub ? "sub" : "hadamard";
  const bool same = a.shape() == b.shape();
  BroadcastPlan p = same ? BroadcastPlan{a.shape(), {}, {}} : plan(a.shape(), b.shape());
  Tensor out(p.out);
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.mutable_ptr();
  const std::size_t n = out.numel();
  if (same) {
    switch (kind) {
      case BinaryKind::add:
        kernels::add(n, pa, pb, po);
        break;
      case BinaryKind::sub:
        for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
        break;
      case BinaryKind::mul:
        kernels::mul(n, pa, pb, po);
        break;
    }
  } else {
    for_each_broadcast(p, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      switch (kind) {
        case BinaryKind::add:
          po[o] = pa[ia] + pb[ib];
          break;
        case BinaryKind::sub:
          po[o] = pa[ia] - pb[ib];
          break;
        case BinaryKind::mul:
          po[o] = pa[ia] * pb[ib];
          break;
      }
    });
  }
  detail::check_finite(out, name);

  auto a_impl = a.impl();
  auto b_impl = b.impl();
  detail::record(out, {&a, &b}, [=](const TensorImpl& res) {
    double* ga = detail::grad_ptr(a_impl);
    double* gb = detail::grad_ptr(b_impl);
    const double* g = res.grad.data();
    const double* av = a_impl->data.data();
    const double* bv = b_impl->data.data();
    const std::size_t count = res.data.size();
    if (same) {
      switch (kind) {
        case BinaryKind::add:
          if (ga) kernels::axpy(count, 1.0, g, ga);
          if (gb) kernels::axpy(count, 1.0, g, gb);
          break;
        case BinaryKind::sub:
          if (ga) kernels::axpy(count, 1.0, g, ga);
          if (gb) kernels::axpy(count, -1.0, g, gb);
          break;
        case BinaryKind::mul:
          if (ga) kernels::mul_acc(count, g, bv, ga);
          if (gb) kernels::mul_acc(count, g, av, gb);
          break;
      }
      return;
    }
    for_each_broadcast(p, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      switch (kind) {
        case BinaryKind::add:
          if (ga) ga[ia] += g[o];
          if (gb) gb[ib] += g[o];
          break;
        case BinaryKind::sub:
          if (ga) ga[ia] += g[o];
          if (gb) gb[ib] -= g[o];
          break;
        case BinaryKind::mul:
          if (ga) ga[ia] += g[o] * bv[ib];
          if (gb) gb[ib] += g[o] * av[ia];
          break;
      }
    });
  });
  return out;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("shapes " + to_string(a) + " and " + to_string(b) + " are not broadcastable");
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor relu(const Tensor& x) {
  if (BranchProbe* probe = detail::active_branch_probe())
    for (const double v : x.data()) probe->note(v > 0.0);
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& x) {
  if (BranchProbe* probe = detail::active_branch_probe())
    for (const double v : x.data()) probe->note(v > 0.0 ? 1 : (v < 0.0 ? 2 : 0));
  return unary(
      x, "abs", [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub); }
Tensor hadamard(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul); }

Tensor scalar_mul(const Tensor& x, double s) {
  return unary(
      x, "scalar_mul", [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Tensor softmax(const Tensor& x) {
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / len;
  Tensor out(x.shape());
  const double* in = x.ptr();
  double* o = out.mutable_ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in + r * len;
    double* orow = o + r * len;
    const double mx = *std::max_element(row, row + len);
    double s = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      orow[j] = std::exp(row[j] - mx);
      s += orow[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < len; ++j) orow[j] *= inv;
  }
  detail::check_finite(out, "softmax");
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* gx = detail::grad_ptr(x_impl);
    if (gx == nullptr) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = res.data.data() + r * len;
      const double* g = res.grad.data() + r * len;
      const double d = kernels::dot(len, g, y);
      double* gr = gx + r * len;
      for (std::size_t j = 0; j < len; ++j) gr[j] += y[j] * (g[j] - d);
    }
  });
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::scalar(kernels::sum(x.numel(), x.ptr()));
  detail::check_finite(out, "sum");
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* gx = detail::grad_ptr(x_impl);
    if (gx == nullptr) return;
    const double g = res.grad[0];
    for (std::size_t i = 0; i < x_impl->data.size(); ++i) gx[i] += g;
  });
  return out;
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  Tensor out = Tensor::scalar(kernels::sum(x.numel(), x.ptr()) * inv);
  detail::check_finite(out, "mean");
  auto x_impl = x.impl();
  detail::record(out, {&x}, [=](const TensorImpl& res) {
    double* gx = detail::grad_ptr(x_impl);
    if (gx == nullptr) return;
    const double g = res.grad[0] * inv;
    for (std::size_t i = 0; i < x_impl->data.size(); ++i) gx[i] += g;
  });
  return out;
}

}  // namespace fsg
