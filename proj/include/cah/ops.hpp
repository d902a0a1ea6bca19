#pragma once

// Differentiable tensor operations. Every op computes its result eagerly and,
// when any operand requires a gradient, records a backward rule on the tape.

#include <cstddef>
#include <vector>

#include "cah/tape.hpp"
#include "cah/tensor.hpp"

namespace cah::ops {

/// NCHW input, OIHW weight, optional O bias (pass an undefined tensor to omit).
template <typename T>
BasicTensor<T> conv2d(BasicTape<T>& tape, const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding);

template <typename T>
BasicTensor<T> relu(BasicTape<T>& tape, const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> sigmoid(BasicTape<T>& tape, const BasicTensor<T>& x);
/// Subgradient 0 at the kink.
template <typename T>
BasicTensor<T> abs(BasicTape<T>& tape, const BasicTensor<T>& x);

// Binary elementwise ops. Operands must have the same rank; each extent must
// match or be 1 on one side (broadcast).
template <typename T>
BasicTensor<T> add(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> div(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(BasicTape<T>& tape, const BasicTensor<T>& x, T factor);
template <typename T>
BasicTensor<T> add_scalar(BasicTape<T>& tape, const BasicTensor<T>& x, T value);

/// Per sample of an N-leading tensor: x / sqrt(mean(x^2) + epsilon^2).
template <typename T>
BasicTensor<T> rms_normalize(BasicTape<T>& tape, const BasicTensor<T>& x, T epsilon);

/// Full reductions to shape [1].
template <typename T>
BasicTensor<T> sum(BasicTape<T>& tape, const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> mean(BasicTape<T>& tape, const BasicTensor<T>& x);

/// Ties route the subgradient to the first maximum in row-major window order.
/// Padded positions never win.
template <typename T>
BasicTensor<T> max_pool2d(BasicTape<T>& tape, const BasicTensor<T>& x, std::size_t kernel, std::size_t stride,
                          std::size_t padding);

/// NCHW -> NxC.
template <typename T>
BasicTensor<T> global_avg_pool(BasicTape<T>& tape, const BasicTensor<T>& x);

/// [M,K] x [K,N] -> [M,N].
template <typename T>
BasicTensor<T> matmul(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);

/// x [N,K], weight [O,K], bias [O] (optional) -> [N,O].
template <typename T>
BasicTensor<T> linear(BasicTape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

/// Concatenates NCHW tensors along the channel axis.
template <typename T>
BasicTensor<T> concat_channels(BasicTape<T>& tape, const std::vector<BasicTensor<T>>& parts);

/// Channels [begin, end) of an NCHW tensor.
template <typename T>
BasicTensor<T> slice_channels(BasicTape<T>& tape, const BasicTensor<T>& x, std::size_t begin, std::size_t end);

template <typename T>
BasicTensor<T> reshape(BasicTape<T>& tape, const BasicTensor<T>& x, Shape shape);

/// Copy that does not propagate gradients.
template <typename T>
BasicTensor<T> detach(const BasicTensor<T>& x) {
  return x.clone();
}

}  // namespace cah::ops
