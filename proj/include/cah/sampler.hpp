#pragma once

// Differentiable bilinear warping by a homography (inverse mapping, zero
// padding, pixel centres at integer coordinates, origin top-left).

#include "cah/geometry.hpp"
#include "cah/tape.hpp"
#include "cah/tensor.hpp"

namespace cah {

template <typename T>
struct BasicWarpResult {
  BasicTensor<T> warped;    // same shape as the input
  BasicTensor<T> validity;  // [1, 1, H, W]; 1 where the sample point lies inside the input
};

using WarpResult = BasicWarpResult<double>;

/// Output pixel (x, y) samples input at h^-1 (x, y). `h` is a [3, 3] tensor;
/// gradients flow to the input values and to h's entries. Validity carries
/// no gradient.
template <typename T>
BasicWarpResult<T> warp(BasicTape<T>& tape, const BasicTensor<T>& input, const BasicTensor<T>& h);

/// Tape-free convenience for inference and data generation.
template <typename T>
BasicWarpResult<T> warp(const BasicTensor<T>& input, const Homography& h);

}  // namespace cah
