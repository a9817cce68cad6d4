#pragma once

// Differentiable tensor primitives. Each op records itself on the active
// Tape when any input requires grad. Image tensors are NCHW.

#include <cstddef>
#include <vector>

#include "fsg/tensor.hpp"

namespace fsg {

// Zero-padded 2D cross-correlation. `bias` may be an undefined Tensor.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding);

// NCDHW input, kernel [C', C, kd, kh, kw]. Depth is valid-mode (D' = D - kd + 1),
// height and width are zero-padded by `padding_spatial`; stride 1.
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t padding_spatial);

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;

  static BatchNormStats init(std::size_t channels);
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Per-channel normalization of an NCHW tensor. Training mode normalizes by
// batch statistics and updates `stats`; eval mode reads them.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, bool training, double eps = kBatchNormEps,
                   double momentum = kBatchNormMomentum);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);

// Binary ops broadcast numpy-style: shapes are right-aligned and each pair
// of dims must be equal or contain a 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& x, double s);

Shape broadcast_shape(const Shape& a, const Shape& b);

// Softmax over the last axis, max-subtracted.
Tensor softmax(const Tensor& x);

Tensor global_avg_pool(const Tensor& x);  // [N,C,H,W] -> [N,C,1,1]
Tensor global_max_pool(const Tensor& x);  // [N,C,H,W] -> [N,C,1,1]
Tensor avg_pool_h(const Tensor& x);       // mean over W -> [N,C,H,1]
Tensor avg_pool_w(const Tensor& x);       // mean over H -> [N,C,1,W]
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding);

Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b);
// A[N,P,Q] x B[N,Q,R] -> [N,P,R]
Tensor matmul_batched(const Tensor& a, const Tensor& b);
// x[N,K] * w[M,K]^T + b[M] -> [N,M]; `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
// Bilinear resize by an integer factor with half-pixel centres
// (align_corners = false); source coordinates clamp at the border.
Tensor upsample_bilinear(const Tensor& x, std::size_t factor);
inline Tensor bilinear_upsample_x2(const Tensor& x) { return upsample_bilinear(x, 2); }

Tensor sum(const Tensor& x);   // -> [1]
Tensor mean(const Tensor& x);  // -> [1]

// Running count of multiply-add FLOPs (2 per MAC) issued by conv, matmul
// and linear on this thread. Used for the model's FLOP estimate.
std::size_t flop_counter();
void reset_flop_counter();

}  // namespace fsg
