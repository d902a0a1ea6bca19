#include "cah/kernels.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

namespace cah::kernels {

namespace {

// Range of output columns [lo, hi) whose input column ox*stride + k - pad lies
// inside [0, in_w).
inline void valid_cols(std::size_t k, std::size_t pad, std::size_t stride, std::size_t in_w, std::size_t out_w,
                       std::size_t& lo, std::size_t& hi) {
  const long kk = static_cast<long>(k) - static_cast<long>(pad);
  const long s = static_cast<long>(stride);
  long first = 0;
  if (kk < 0) first = (-kk + s - 1) / s;
  long last = (static_cast<long>(in_w) - 1 - kk);
  if (last < 0) {
    lo = hi = 0;
    return;
  }
  last = last / s;
  lo = static_cast<std::size_t>(std::min<long>(first, static_cast<long>(out_w)));
  hi = static_cast<std::size_t>(std::clamp<long>(last + 1, static_cast<long>(lo), static_cast<long>(out_w)));
}

// Columns of the unfolded input: row (c, ky, kx), column (oy, ox).
template <typename T>
void im2col(const Conv2dGeometry& g, const T* src, T* col) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), plane = oh * ow;
  const std::size_t rows = g.in_channels * g.kernel_h * g.kernel_w;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t kx = r % g.kernel_w, ky = (r / g.kernel_w) % g.kernel_h, c = r / (g.kernel_w * g.kernel_h);
    const T* in = src + c * g.in_h * g.in_w;
    T* dst = col + r * plane;
    std::fill(dst, dst + plane, T(0));
    std::size_t lo, hi;
    valid_cols(kx, g.padding, g.stride, g.in_w, ow, lo, hi);
    if (lo >= hi) continue;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
      if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
      const T* row = in + static_cast<std::size_t>(iy) * g.in_w + kx - g.padding;
      T* orow = dst + oy * ow;
      for (std::size_t ox = lo; ox < hi; ++ox) orow[ox] = row[ox * g.stride];
    }
  }
}

// Adds the unfolded gradient back onto the input planes of channels [c0, c1).
template <typename T>
void col2im(const Conv2dGeometry& g, const T* col, T* dst, std::size_t c0, std::size_t c1) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), plane = oh * ow, ksz = g.kernel_h * g.kernel_w;
  for (std::size_t c = c0; c < c1; ++c) {
    T* in = dst + c * g.in_h * g.in_w;
    for (std::size_t k = 0; k < ksz; ++k) {
      const std::size_t kx = k % g.kernel_w, ky = k / g.kernel_w;
      const T* src = col + (c * ksz + k) * plane;
      std::size_t lo, hi;
      valid_cols(kx, g.padding, g.stride, g.in_w, ow, lo, hi);
      if (lo >= hi) continue;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
        if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
        T* row = in + static_cast<std::size_t>(iy) * g.in_w + kx - g.padding;
        const T* grow = src + oy * ow;
        for (std::size_t ox = lo; ox < hi; ++ox) row[ox * g.stride] += grow[ox];
      }
    }
  }
}

// Fixed block size so the split, and with it the rounding, does not depend on the thread count.
constexpr std::size_t kRowBlock = 16;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

}  // namespace

template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> in, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t depth = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t in_size = g.in_channels * g.in_h * g.in_w;
  const std::size_t blocks = (g.out_channels + kRowBlock - 1) / kRowBlock;
  std::vector<T> col(depth * plane);
  const ConstMap<T> w(weight.data(), static_cast<long>(g.out_channels), static_cast<long>(depth));
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, in.data() + n * in_size, col.data());
    const ConstMap<T> cm(col.data(), static_cast<long>(depth), static_cast<long>(plane));
    T* dst = out.data() + n * g.out_channels * plane;
#pragma omp parallel for schedule(static)
    for (long b = 0; b < static_cast<long>(blocks); ++b) {
      const std::size_t o0 = static_cast<std::size_t>(b) * kRowBlock;
      const std::size_t rows = std::min(kRowBlock, g.out_channels - o0);
      MutMap<T> om(dst + o0 * plane, static_cast<long>(rows), static_cast<long>(plane));
      om.noalias() = w.middleRows(static_cast<long>(o0), static_cast<long>(rows)) * cm;
      if (!bias.empty())
        for (std::size_t r = 0; r < rows; ++r) om.row(static_cast<long>(r)).array() += bias[o0 + r];
    }
  }
}

template <typename T>
void conv2d_forward_reference(const Conv2dGeometry& g, std::span<const T> in, std::span<const T> weight,
                              std::span<const T> bias, std::span<T> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T acc = bias.empty() ? T(0) : bias[o];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) || ix >= static_cast<long>(g.in_w))
                  continue;
                acc += weight[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] *
                       in[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
          out[((n * g.out_channels + o) * oh + oy) * ow + ox] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const T> grad_out, std::span<const T> weight,
                           std::span<T> grad_in) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t ksz = g.kernel_h * g.kernel_w;
  const std::size_t depth = g.in_channels * ksz;
  const std::size_t in_size = g.in_channels * g.in_h * g.in_w;
  std::vector<T> col(depth * plane);
  const ConstMap<T> w(weight.data(), static_cast<long>(g.out_channels), static_cast<long>(depth));
  const std::size_t blocks = (g.in_channels + kRowBlock - 1) / kRowBlock;
  for (std::size_t n = 0; n < g.batch; ++n) {
    const ConstMap<T> go(grad_out.data() + n * g.out_channels * plane, static_cast<long>(g.out_channels),
                         static_cast<long>(plane));
#pragma omp parallel for schedule(static)
    for (long b = 0; b < static_cast<long>(blocks); ++b) {
      const std::size_t c0 = static_cast<std::size_t>(b) * kRowBlock;
      const std::size_t c1 = std::min(g.in_channels, c0 + kRowBlock);
      MutMap<T> cm(col.data() + c0 * ksz * plane, static_cast<long>((c1 - c0) * ksz), static_cast<long>(plane));
      cm.noalias() = w.middleCols(static_cast<long>(c0 * ksz), static_cast<long>((c1 - c0) * ksz)).transpose() * go;
      col2im(g, col.data(), grad_in.data() + n * in_size, c0, c1);
    }
  }
}

template <typename T>
void conv2d_backward_input_reference(const Conv2dGeometry& g, std::span<const T> grad_out,
                                     std::span<const T> weight, std::span<T> grad_in) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T go = grad_out[((n * g.out_channels + o) * oh + oy) * ow + ox];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) || ix >= static_cast<long>(g.in_w))
                  continue;
                grad_in[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix] +=
                    go * weight[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
              }
        }
}

template <typename T>
void conv2d_backward_params(const Conv2dGeometry& g, std::span<const T> in, std::span<const T> grad_out,
                            std::span<T> grad_weight, std::span<T> grad_bias) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t depth = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t in_size = g.in_channels * g.in_h * g.in_w;
  const std::size_t blocks = (g.out_channels + kRowBlock - 1) / kRowBlock;
  std::vector<T> col(grad_weight.empty() ? 0 : depth * plane);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const ConstMap<T> go(grad_out.data() + n * g.out_channels * plane, static_cast<long>(g.out_channels),
                         static_cast<long>(plane));
    if (!grad_weight.empty()) im2col(g, in.data() + n * in_size, col.data());
#pragma omp parallel for schedule(static)
    for (long b = 0; b < static_cast<long>(blocks); ++b) {
      const std::size_t o0 = static_cast<std::size_t>(b) * kRowBlock;
      const std::size_t rows = std::min(kRowBlock, g.out_channels - o0);
      // plain loop: Eigen's vectorized sum peels by pointer alignment
      for (std::size_t r = 0; r < rows && !grad_bias.empty(); ++r) {
        const T* row = grad_out.data() + (n * g.out_channels + o0 + r) * plane;
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += row[i];
        grad_bias[o0 + r] += acc;
      }
      if (grad_weight.empty()) continue;
      const ConstMap<T> cm(col.data(), static_cast<long>(depth), static_cast<long>(plane));
      MutMap<T> gw(grad_weight.data() + o0 * depth, static_cast<long>(rows), static_cast<long>(depth));
      gw.noalias() += go.middleRows(static_cast<long>(o0), static_cast<long>(rows)) * cm.transpose();
    }
  }
}

template <typename T>
void conv2d_backward_params_reference(const Conv2dGeometry& g, std::span<const T> in,
                                      std::span<const T> grad_out, std::span<T> grad_weight,
                                      std::span<T> grad_bias) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T go = grad_out[((n * g.out_channels + o) * oh + oy) * ow + ox];
          if (!grad_bias.empty()) grad_bias[o] += go;
          if (grad_weight.empty()) continue;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) || ix >= static_cast<long>(g.in_w))
                  continue;
                grad_weight[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] +=
                    go * in[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
        }
}

// ---------------------------------------------------------------------------
// Bilinear homography warp.

namespace {

constexpr double kMinHomogeneous = 1e-12;

struct Tap {
  bool ok = false;    // sample point defined (w above floor)
  bool valid = false; // sample inside [0, w-1] x [0, h-1]
  double u = 0, v = 0, w = 1;
  long x0 = 0, y0 = 0;
  double fx = 0, fy = 0;
};

inline Tap locate(const double* m, std::size_t x, std::size_t y, std::size_t width, std::size_t height) {
  Tap t;
  const double px = static_cast<double>(x), py = static_cast<double>(y);
  const double a = m[0] * px + m[1] * py + m[2];
  const double b = m[3] * px + m[4] * py + m[5];
  t.w = m[6] * px + m[7] * py + m[8];
  if (!(std::abs(t.w) >= kMinHomogeneous)) return t;
  t.ok = true;
  t.u = a / t.w;
  t.v = b / t.w;
  if (!std::isfinite(t.u) || !std::isfinite(t.v) || std::abs(t.u) > 1e9 || std::abs(t.v) > 1e9) {
    t.ok = false;
    return t;
  }
  const double fu = std::floor(t.u), fv = std::floor(t.v);
  t.x0 = static_cast<long>(fu);
  t.y0 = static_cast<long>(fv);
  t.fx = t.u - fu;
  t.fy = t.v - fv;
  t.valid = t.u >= 0.0 && t.v >= 0.0 && t.u <= static_cast<double>(width - 1) &&
            t.v <= static_cast<double>(height - 1);
  return t;
}

template <typename T>
inline T fetch(const T* plane, long x, long y, std::size_t width, std::size_t height) {
  if (x < 0 || y < 0 || x >= static_cast<long>(width) || y >= static_cast<long>(height)) return T(0);
  return plane[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)];
}

template <typename T>
inline T sample(const T* plane, const Tap& t, std::size_t width, std::size_t height) {
  const T w00 = static_cast<T>((1.0 - t.fx) * (1.0 - t.fy));
  const T w10 = static_cast<T>(t.fx * (1.0 - t.fy));
  const T w01 = static_cast<T>((1.0 - t.fx) * t.fy);
  const T w11 = static_cast<T>(t.fx * t.fy);
  return w00 * fetch(plane, t.x0, t.y0, width, height) + w10 * fetch(plane, t.x0 + 1, t.y0, width, height) +
         w01 * fetch(plane, t.x0, t.y0 + 1, width, height) + w11 * fetch(plane, t.x0 + 1, t.y0 + 1, width, height);
}

template <typename T>
void warp_row(const WarpGeometry& g, std::span<const T> in, const double* m, std::span<T> out,
              std::span<T> validity, std::size_t y) {
  const std::size_t plane = g.height * g.width;
  for (std::size_t x = 0; x < g.width; ++x) {
    const Tap t = locate(m, x, y, g.width, g.height);
    const std::size_t idx = y * g.width + x;
    if (!validity.empty()) validity[idx] = t.valid ? T(1) : T(0);
    for (std::size_t p = 0; p < g.planes; ++p)
      out[p * plane + idx] = t.ok ? sample(in.data() + p * plane, t, g.width, g.height) : T(0);
  }
}

// Accumulates input and matrix gradients for one output row; matrix partials
// go to row_grad (9 entries).
template <typename T>
void warp_backward_row(const WarpGeometry& g, std::span<const T> in, const double* m,
                       std::span<const T> grad_out, std::span<T> grad_in, double* row_grad, std::size_t y) {
  const std::size_t plane = g.height * g.width;
  const long W = static_cast<long>(g.width), H = static_cast<long>(g.height);
  for (std::size_t x = 0; x < g.width; ++x) {
    const Tap t = locate(m, x, y, g.width, g.height);
    if (!t.ok) continue;
    const std::size_t idx = y * g.width + x;
    const double w00 = (1.0 - t.fx) * (1.0 - t.fy), w10 = t.fx * (1.0 - t.fy);
    const double w01 = (1.0 - t.fx) * t.fy, w11 = t.fx * t.fy;
    double du = 0.0, dv = 0.0;
    for (std::size_t p = 0; p < g.planes; ++p) {
      const double go = static_cast<double>(grad_out[p * plane + idx]);
      if (go == 0.0) continue;
      const T* src = in.data() + p * plane;
      if (!grad_in.empty()) {
        T* dst = grad_in.data() + p * plane;
        auto put = [&](long xx, long yy, double wt) {
          if (xx < 0 || yy < 0 || xx >= W || yy >= H) return;
          dst[static_cast<std::size_t>(yy) * g.width + static_cast<std::size_t>(xx)] += static_cast<T>(go * wt);
        };
        put(t.x0, t.y0, w00);
        put(t.x0 + 1, t.y0, w10);
        put(t.x0, t.y0 + 1, w01);
        put(t.x0 + 1, t.y0 + 1, w11);
      }
      if (row_grad) {
        const double v00 = fetch(src, t.x0, t.y0, g.width, g.height);
        const double v10 = fetch(src, t.x0 + 1, t.y0, g.width, g.height);
        const double v01 = fetch(src, t.x0, t.y0 + 1, g.width, g.height);
        const double v11 = fetch(src, t.x0 + 1, t.y0 + 1, g.width, g.height);
        du += go * ((1.0 - t.fy) * (v10 - v00) + t.fy * (v11 - v01));
        dv += go * ((1.0 - t.fx) * (v01 - v00) + t.fx * (v11 - v10));
      }
    }
    if (row_grad && (du != 0.0 || dv != 0.0)) {
      const double q[3] = {static_cast<double>(x), static_cast<double>(y), 1.0};
      const double inv_w = 1.0 / t.w;
      for (int j = 0; j < 3; ++j) {
        row_grad[j] += du * q[j] * inv_w;
        row_grad[3 + j] += dv * q[j] * inv_w;
        row_grad[6 + j] -= (du * t.u + dv * t.v) * q[j] * inv_w;
      }
    }
  }
}

}  // namespace

template <typename T>
void warp_bilinear(const WarpGeometry& g, std::span<const T> in, const double* sample_from, std::span<T> out,
                   std::span<T> validity) {
  const long rows = static_cast<long>(g.height);
#pragma omp parallel for schedule(static)
  for (long y = 0; y < rows; ++y) warp_row(g, in, sample_from, out, validity, static_cast<std::size_t>(y));
}

template <typename T>
void warp_bilinear_reference(const WarpGeometry& g, std::span<const T> in, const double* sample_from,
                             std::span<T> out, std::span<T> validity) {
  const std::size_t plane = g.height * g.width;
  for (std::size_t p = 0; p < g.planes; ++p)
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x) {
        const double px = static_cast<double>(x), py = static_cast<double>(y);
        const double* m = sample_from;
        const double w = m[6] * px + m[7] * py + m[8];
        const std::size_t idx = y * g.width + x;
        if (!(std::abs(w) >= kMinHomogeneous)) {
          out[p * plane + idx] = T(0);
          if (p == 0 && !validity.empty()) validity[idx] = T(0);
          continue;
        }
        const double u = (m[0] * px + m[1] * py + m[2]) / w;
        const double v = (m[3] * px + m[4] * py + m[5]) / w;
        double acc = 0.0;
        const long x0 = static_cast<long>(std::floor(u)), y0 = static_cast<long>(std::floor(v));
        for (long dy = 0; dy <= 1; ++dy)
          for (long dx = 0; dx <= 1; ++dx) {
            const long xx = x0 + dx, yy = y0 + dy;
            if (xx < 0 || yy < 0 || xx >= static_cast<long>(g.width) || yy >= static_cast<long>(g.height)) continue;
            const double wx = dx ? u - std::floor(u) : 1.0 - (u - std::floor(u));
            const double wy = dy ? v - std::floor(v) : 1.0 - (v - std::floor(v));
            acc += wx * wy * static_cast<double>(in[p * plane + static_cast<std::size_t>(yy) * g.width + xx]);
          }
        out[p * plane + idx] = static_cast<T>(acc);
        if (p == 0 && !validity.empty()) {
          const bool inside = u >= 0 && v >= 0 && u <= static_cast<double>(g.width - 1) &&
                              v <= static_cast<double>(g.height - 1);
          validity[idx] = inside ? T(1) : T(0);
        }
      }
}

template <typename T>
void warp_bilinear_backward(const WarpGeometry& g, std::span<const T> in, const double* sample_from,
                            std::span<const T> grad_out, std::span<T> grad_in, double* grad_matrix) {
  // Input-gradient scatter crosses row boundaries; only the matrix-only
  // pass runs rows in parallel.
  std::vector<double> partial(grad_matrix ? g.height * 9 : 0, 0.0);
  if (grad_in.empty()) {
    const long rows = static_cast<long>(g.height);
#pragma omp parallel for schedule(static)
    for (long y = 0; y < rows; ++y)
      warp_backward_row(g, in, sample_from, grad_out, grad_in,
                        grad_matrix ? partial.data() + 9 * static_cast<std::size_t>(y) : nullptr,
                        static_cast<std::size_t>(y));
  } else {
    for (std::size_t y = 0; y < g.height; ++y)
      warp_backward_row(g, in, sample_from, grad_out, grad_in, grad_matrix ? partial.data() + 9 * y : nullptr, y);
  }
  if (grad_matrix) {
    for (std::size_t y = 0; y < g.height; ++y)
      for (int j = 0; j < 9; ++j) grad_matrix[j] += partial[9 * y + static_cast<std::size_t>(j)];
  }
}

template <typename T>
void warp_bilinear_backward_reference(const WarpGeometry& g, std::span<const T> in, const double* sample_from,
                                      std::span<const T> grad_out, std::span<T> grad_in, double* grad_matrix) {
  const std::size_t plane = g.height * g.width;
  const double* m = sample_from;
  for (std::size_t p = 0; p < g.planes; ++p)
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x) {
        const double px = static_cast<double>(x), py = static_cast<double>(y);
        const double w = m[6] * px + m[7] * py + m[8];
        if (!(std::abs(w) >= kMinHomogeneous)) continue;
        const double u = (m[0] * px + m[1] * py + m[2]) / w;
        const double v = (m[3] * px + m[4] * py + m[5]) / w;
        const double go = static_cast<double>(grad_out[p * plane + y * g.width + x]);
        const long x0 = static_cast<long>(std::floor(u)), y0 = static_cast<long>(std::floor(v));
        const double fx = u - std::floor(u), fy = v - std::floor(v);
        double du = 0.0, dv = 0.0;
        for (long dy = 0; dy <= 1; ++dy)
          for (long dx = 0; dx <= 1; ++dx) {
            const long xx = x0 + dx, yy = y0 + dy;
            if (xx < 0 || yy < 0 || xx >= static_cast<long>(g.width) || yy >= static_cast<long>(g.height)) continue;
            const std::size_t k = p * plane + static_cast<std::size_t>(yy) * g.width + static_cast<std::size_t>(xx);
            const double wx = dx ? fx : 1.0 - fx, wy = dy ? fy : 1.0 - fy;
            if (!grad_in.empty()) grad_in[k] += static_cast<T>(go * wx * wy);
            const double val = static_cast<double>(in[k]);
            du += go * val * (dx ? 1.0 : -1.0) * wy;
            dv += go * val * wx * (dy ? 1.0 : -1.0);
          }
        if (grad_matrix) {
          const double q[3] = {px, py, 1.0};
          for (int j = 0; j < 3; ++j) {
            grad_matrix[j] += du * q[j] / w;
            grad_matrix[3 + j] += dv * q[j] / w;
            grad_matrix[6 + j] -= (du * u + dv * v) * q[j] / w;
          }
        }
      }
}

#define CAH_INSTANTIATE_KERNELS(T)                                                                             \
  template void conv2d_forward<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,               \
                                  std::span<const T>, std::span<T>);                                           \
  template void conv2d_forward_reference<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,     \
                                            std::span<const T>, std::span<T>);                                 \
  template void conv2d_backward_input<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,        \
                                         std::span<T>);                                                        \
  template void conv2d_backward_input_reference<T>(const Conv2dGeometry&, std::span<const T>,                  \
                                                   std::span<const T>, std::span<T>);                          \
  template void conv2d_backward_params<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,       \
                                          std::span<T>, std::span<T>);                                         \
  template void conv2d_backward_params_reference<T>(const Conv2dGeometry&, std::span<const T>,                 \
                                                    std::span<const T>, std::span<T>, std::span<T>);           \
  template void warp_bilinear<T>(const WarpGeometry&, std::span<const T>, const double*, std::span<T>,         \
                                 std::span<T>);                                                                \
  template void warp_bilinear_reference<T>(const WarpGeometry&, std::span<const T>, const double*,             \
                                           std::span<T>, std::span<T>);                                        \
  template void warp_bilinear_backward<T>(const WarpGeometry&, std::span<const T>, const double*,              \
                                          std::span<const T>, std::span<T>, double*);                          \
  template void warp_bilinear_backward_reference<T>(const WarpGeometry&, std::span<const T>, const double*,    \
                                                    std::span<const T>, std::span<T>, double*);

CAH_INSTANTIATE_KERNELS(float)
CAH_INSTANTIATE_KERNELS(double)

}  // namespace cah::kernels
