#pragma once

// Single-level orthonormal 2D Haar transform on NCHW tensors.
//
// For each 2x2 block [[a, b], [c, d]] (rows run along height):
//   LL = (a + b + c + d) / 2    low along width,  low along height
//   LH = (a + b - c - d) / 2    low along width,  high along height
//   HL = (a - b + c - d) / 2    high along width, low along height
//   HH = (a - b - c + d) / 2    high along width, high along height
// The transform is orthonormal, so the inverse is its transpose.

#include "fsg/tensor.hpp"

namespace fsg {

struct WaveletSubbands {
  Tensor ll, lh, hl, hh;
};

// Requires even H and W; pad before calling.
WaveletSubbands dwt2_haar(const Tensor& input);
Tensor idwt2_haar(const WaveletSubbands& subbands);

}  // namespace fsg
