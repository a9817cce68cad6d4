#include "fsg/wavelet.hpp"

#include <string>

#include "fsg/detail/autograd.hpp"

namespace fsg {

namespace {

// Forward butterfly over all blocks: src is [P, 2h, 2w], bands are [P, h, w].
void haar_analysis(const double* src, std::size_t planes, std::size_t h, std::size_t w, double* ll,
                   double* lh, double* hl, double* hh) {
  const std::size_t W = 2 * w;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* s = src + p * 4 * h * w;
    const std::size_t o = p * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      const double* top = s + (2 * i) * W;
      const double* bot = top + W;
      for (std::size_t j = 0; j < w; ++j) {
        const double a = top[2 * j], b = top[2 * j + 1], c = bot[2 * j], d = bot[2 * j + 1];
        const std::size_t k = o + i * w + j;
        ll[k] = 0.5 * ((a + b) + (c + d));
        lh[k] = 0.5 * ((a + b) - (c + d));
        hl[k] = 0.5 * ((a - b) + (c - d));
        hh[k] = 0.5 * ((a - b) - (c - d));
      }
    }
  }
}

// Inverse butterfly; accumulate == true adds into dst instead of writing.
void haar_synthesis(const double* ll, const double* lh, const double* hl, const double* hh,
                    std::size_t planes, std::size_t h, std::size_t w, double* dst, bool accumulate) {
  const std::size_t W = 2 * w;
  for (std::size_t p = 0; p < planes; ++p) {
    double* s = dst + p * 4 * h * w;
    const std::size_t o = p * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      double* top = s + (2 * i) * W;
      double* bot = top + W;
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t k = o + i * w + j;
        const double s0 = ll[k] + lh[k], s1 = ll[k] - lh[k];
        const double d0 = hl[k] + hh[k], d1 = hl[k] - hh[k];
        const double a = 0.5 * (s0 + d0), b = 0.5 * (s0 - d0);
        const double c = 0.5 * (s1 + d1), d = 0.5 * (s1 - d1);
        if (accumulate) {
          top[2 * j] += a;
          top[2 * j + 1] += b;
          bot[2 * j] += c;
          bot[2 * j + 1] += d;
        } else {
          top[2 * j] = a;
          top[2 * j + 1] = b;
          bot[2 * j] = c;
          bot[2 * j + 1] = d;
        }
      }
    }
  }
}

}  // namespace

WaveletSubbands dwt2_haar(const Tensor& input) {
  if (input.rank() != 4) throw ShapeError("dwt2_haar: expected [N,C,H,W], got " + to_string(input.shape()));
  const std::size_t H = input.dim(2), W = input.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw ShapeError("dwt2_haar: height and width must be even, got " + to_string(input.shape()) +
                     "; pad the input to even size first");
  const std::size_t planes = input.dim(0) * input.dim(1), h = H / 2, w = W / 2;
  const Shape band{input.dim(0), input.dim(1), h, w};
  WaveletSubbands out{Tensor(band), Tensor(band), Tensor(band), Tensor(band)};
  haar_analysis(input.ptr(), planes, h, w, out.ll.mutable_ptr(), out.lh.mutable_ptr(), out.hl.mutable_ptr(),
                out.hh.mutable_ptr());
  detail::check_finite(out.ll, "dwt2_haar");

  // Four outputs: each records its own adjoint contribution (the matching
  // rows of the synthesis operator, with the other bands zeroed).
  auto in_impl = input.impl();
  Tensor* bands[4] = {&out.ll, &out.lh, &out.hl, &out.hh};
  for (int which = 0; which < 4; ++which) {
    detail::record(*bands[which], {&input}, [=](const TensorImpl& res) {
      double* g = detail::grad_ptr(in_impl);
      if (g == nullptr) return;
      const std::vector<double> zeros(res.data.size(), 0.0);
      const double* parts[4] = {zeros.data(), zeros.data(), zeros.data(), zeros.data()};
      parts[which] = res.grad.data();
      haar_synthesis(parts[0], parts[1], parts[2], parts[3], planes, h, w, g, true);
    });
  }
  return out;
}

Tensor idwt2_haar(const WaveletSubbands& s) {
  const Shape& band = s.ll.shape();
  if (band.size() != 4 || s.lh.shape() != band || s.hl.shape() != band || s.hh.shape() != band)
    throw ShapeError("idwt2_haar: sub-band shapes differ or are not [N,C,h,w]: LL " + to_string(band) +
                     ", LH " + to_string(s.lh.shape()) + ", HL " + to_string(s.hl.shape()) + ", HH " +
                     to_string(s.hh.shape()));
  const std::size_t planes = band[0] * band[1], h = band[2], w = band[3];
  Tensor out(Shape{band[0], band[1], 2 * h, 2 * w});
  haar_synthesis(s.ll.ptr(), s.lh.ptr(), s.hl.ptr(), s.hh.ptr(), planes, h, w, out.mutable_ptr(), false);
  detail::check_finite(out, "idwt2_haar");

  auto ll = s.ll.impl(), lh = s.lh.impl(), hl = s.hl.impl(), hh = s.hh.impl();
  detail::record(out, {&s.ll, &s.lh, &s.hl, &s.hh}, [=](const TensorImpl& res) {
    const std::size_t n = planes * h * w;
    std::vector<double> gll(n), glh(n), ghl(n), ghh(n);
    haar_analysis(res.grad.data(), planes, h, w, gll.data(), glh.data(), ghl.data(), ghh.data());
    const std::shared_ptr<TensorImpl>* impls[4] = {&ll, &lh, &hl, &hh};
    const std::vector<double>* grads[4] = {&gll, &glh, &ghl, &ghh};
    for (int b = 0; b < 4; ++b) {
      double* g = detail::grad_ptr(*impls[b]);
      if (g == nullptr) continue;
      for (std::size_t i = 0; i < n; ++i) g[i] += (*grads[b])[i];
    }
  });
  return out;
}

}  // namespace fsg
