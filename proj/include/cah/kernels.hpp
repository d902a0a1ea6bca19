#pragma once

// Raw compute kernels behind the differentiable ops. Each kernel comes in two
// flavours: a straightforward serial reference, kept for testing, and an
// OpenMP-parallel production version. Both write every output element from a
// single thread in a fixed order, so results do not depend on thread count.

#include <cstddef>
#include <span>

namespace cah::kernels {

struct Conv2dGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
  std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t weight_size() const { return out_channels * in_channels * kernel_h * kernel_w; }
  std::size_t output_size() const { return batch * out_channels * out_h() * out_w(); }
};

/// out = conv(in, weight) + bias. `bias` may be empty.
template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> in, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out);
template <typename T>
void conv2d_forward_reference(const Conv2dGeometry& g, std::span<const T> in, std::span<const T> weight,
                              std::span<const T> bias, std::span<T> out);

/// grad_in += conv_transpose(grad_out, weight).
template <typename T>
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const T> grad_out, std::span<const T> weight,
                           std::span<T> grad_in);
template <typename T>
void conv2d_backward_input_reference(const Conv2dGeometry& g, std::span<const T> grad_out,
                                     std::span<const T> weight, std::span<T> grad_in);

/// grad_weight += correlation(in, grad_out); grad_bias += sum(grad_out). Either
/// destination may be empty to skip it.
template <typename T>
void conv2d_backward_params(const Conv2dGeometry& g, std::span<const T> in, std::span<const T> grad_out,
                            std::span<T> grad_weight, std::span<T> grad_bias);
template <typename T>
void conv2d_backward_params_reference(const Conv2dGeometry& g, std::span<const T> in,
                                      std::span<const T> grad_out, std::span<T> grad_weight,
                                      std::span<T> grad_bias);

/// Geometry of a homography-driven bilinear resampling of a planar stack
/// (planes = batch * channels, each height x width).
struct WarpGeometry {
  std::size_t planes = 1;
  std::size_t height = 1;
  std::size_t width = 1;
};

/// Backward-maps every output pixel through `sample_from` (row-major 3x3,
/// output coords -> input coords) and samples bilinearly with zero padding.
/// `validity` (height*width) is 1 where all four taps were in bounds.
template <typename T>
void warp_bilinear(const WarpGeometry& g, std::span<const T> in, const double* sample_from, std::span<T> out,
                   std::span<T> validity);
template <typename T>
void warp_bilinear_reference(const WarpGeometry& g, std::span<const T> in, const double* sample_from,
                             std::span<T> out, std::span<T> validity);

/// Backward of warp_bilinear. Accumulates into grad_in (may be empty) and
/// into grad_matrix (9 entries, d loss / d sample_from; may be null).
template <typename T>
void warp_bilinear_backward(const WarpGeometry& g, std::span<const T> in, const double* sample_from,
                            std::span<const T> grad_out, std::span<T> grad_in, double* grad_matrix);
template <typename T>
void warp_bilinear_backward_reference(const WarpGeometry& g, std::span<const T> in, const double* sample_from,
                                      std::span<const T> grad_out, std::span<T> grad_in, double* grad_matrix);

}  // namespace cah::kernels
