#pragma once

// Shared helpers for the unit tests: seeded random tensors and brute-force
// loop oracles that never touch the kernel table.

#include <cmath>
#include <cstddef>
#include <vector>

#include "fsg/ops.hpp"
#include "fsg/rng.hpp"
#include "fsg/tensor.hpp"

namespace fsg::test {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return random_tensor(shape, rng, lo, hi);
}

inline double sum_of_squares(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return s;
}

// Direct zero-padded cross-correlation.
inline Tensor conv2d_oracle(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1, wo = (w + 2 * pad - kw) / stride + 1;
  Tensor y(Shape{n, co, ho, wo});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t yy = 0; yy < ho; ++yy)
        for (std::size_t xx = 0; xx < wo; ++xx) {
          double acc = b.defined() ? b[o] : 0.0;
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t dy = 0; dy < kh; ++dy)
              for (std::size_t dx = 0; dx < kw; ++dx) {
                const auto sy = static_cast<long>(yy * stride + dy) - static_cast<long>(pad);
                const auto sx = static_cast<long>(xx * stride + dx) - static_cast<long>(pad);
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
                acc += x[((i * c + ci) * h + sy) * w + sx] * k[((o * c + ci) * kh + dy) * kw + dx];
              }
          y[((i * co + o) * ho + yy) * wo + xx] = acc;
        }
  return y;
}

// Depth valid, spatial zero-padded 3D cross-correlation.
inline Tensor conv3d_oracle(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  const std::size_t co = k.dim(0), kd = k.dim(2), kh = k.dim(3), kw = k.dim(4);
  const std::size_t dout = d - kd + 1, ho = h + 2 * pad - kh + 1, wo = w + 2 * pad - kw + 1;
  Tensor y(Shape{n, co, dout, ho, wo});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t z = 0; z < dout; ++z)
        for (std::size_t yy = 0; yy < ho; ++yy)
          for (std::size_t xx = 0; xx < wo; ++xx) {
            double acc = b.defined() ? b[o] : 0.0;
            for (std::size_t ci = 0; ci < c; ++ci)
              for (std::size_t dz = 0; dz < kd; ++dz)
                for (std::size_t dy = 0; dy < kh; ++dy)
                  for (std::size_t dx = 0; dx < kw; ++dx) {
                    const auto sy = static_cast<long>(yy + dy) - static_cast<long>(pad);
                    const auto sx = static_cast<long>(xx + dx) - static_cast<long>(pad);
                    if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
                    acc += x[(((i * c + ci) * d + z + dz) * h + sy) * w + sx] *
                           k[(((o * c + ci) * kd + dz) * kh + dy) * kw + dx];
                  }
            y[(((i * co + o) * dout + z) * ho + yy) * wo + xx] = acc;
          }
  return y;
}

// Half-pixel bilinear resize by an integer factor, border-clamped.
inline Tensor upsample_oracle(const Tensor& x, std::size_t f) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y(Shape{n, c, h * f, w * f});
  auto src = [f](std::size_t o, std::size_t len, std::size_t& i0, std::size_t& i1, double& t) {
    double s = (static_cast<double>(o) + 0.5) / static_cast<double>(f) - 0.5;
    if (s < 0) s = 0;
    if (s > static_cast<double>(len - 1)) s = static_cast<double>(len - 1);
    i0 = static_cast<std::size_t>(std::floor(s));
    i1 = std::min(i0 + 1, len - 1);
    t = s - static_cast<double>(i0);
  };
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t oy = 0; oy < h * f; ++oy)
      for (std::size_t ox = 0; ox < w * f; ++ox) {
        std::size_t y0, y1, x0, x1;
        double ty, tx;
        src(oy, h, y0, y1, ty);
        src(ox, w, x0, x1, tx);
        const double* s = x.ptr() + p * h * w;
        const double top = s[y0 * w + x0] * (1 - tx) + s[y0 * w + x1] * tx;
        const double bot = s[y1 * w + x0] * (1 - tx) + s[y1 * w + x1] * tx;
        y[(p * h * f + oy) * w * f + ox] = top * (1 - ty) + bot * ty;
      }
  return y;
}

inline Tensor grad_of(const Tensor& t) {
  return Tensor(t.shape(), std::vector<double>(t.grad().begin(), t.grad().end()));
}

}  // namespace fsg::test
