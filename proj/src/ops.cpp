#include "cah/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "cah/kernels.hpp"

namespace cah::ops {

namespace {

template <typename T>
void require_rank(const BasicTensor<T>& x, std::size_t rank, const char* op, const char* what) {
  if (!x.defined()) throw DimensionError(std::string(op) + ": " + what + " is undefined");
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
  }
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_stride, b_stride;
  bool same = false;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  const std::size_t r = a.size();
  p.out.resize(r);
  for (std::size_t d = 0; d < r; ++d) {
    if (a[d] == b[d] || b[d] == 1) {
      p.out[d] = a[d];
    } else if (a[d] == 1) {
      p.out[d] = b[d];
    } else {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
  }
  auto strides = [&](const Shape& s) {
    std::vector<std::size_t> st(r, 0);
    std::size_t acc = 1;
    for (std::size_t d = r; d-- > 0;) {
      st[d] = (s[d] == 1 && p.out[d] != 1) ? 0 : acc;
      acc *= s[d];
    }
    return st;
  };
  p.a_stride = strides(a);
  p.b_stride = strides(b);
  return p;
}

// Calls f(out_index, a_index, b_index) over the broadcast output.
template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t n = shape_numel(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t r = p.out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ai = 0, bi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ai, bi);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ai += p.a_stride[d];
      bi += p.b_stride[d];
      if (idx[d] < p.out[d]) break;
      ai -= p.a_stride[d] * p.out[d];
      bi -= p.b_stride[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

template <typename T, typename Fwd, typename Bwd>
BasicTensor<T> binary(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b, const char* name,
                      Fwd fwd, Bwd bwd) {
  if (!a.defined() || !b.defined()) throw DimensionError(std::string(name) + ": undefined operand");
  const BroadcastPlan plan = plan_broadcast(a.shape(), b.shape(), name);
  BasicTensor<T> out(plan.out);
  {
    auto o = out.mutable_data();
    auto ad = a.data();
    auto bd = b.data();
    for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) { o[i] = fwd(ad[ia], bd[ib]); });
  }
  if (BasicTape<T>::any_requires_grad({&a, &b})) {
    tape.record(out, [out, a, b, plan, bwd]() mutable {
      auto go = out.grad();
      auto ad = a.data();
      auto bd = b.data();
      std::span<T> ga, gb;
      if (a.requires_grad()) ga = a.mutable_grad();
      if (b.requires_grad()) gb = b.mutable_grad();
      for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        T da = 0, db = 0;
        bwd(ad[ia], bd[ib], go[i], da, db);
        if (!ga.empty()) ga[ia] += da;
        if (!gb.empty()) gb[ib] += db;
      });
    });
  }
  return out;
}

template <typename T, typename Fwd, typename Bwd>
BasicTensor<T> unary(BasicTape<T>& tape, const BasicTensor<T>& x, Fwd fwd, Bwd bwd) {
  if (!x.defined()) throw DimensionError("unary op: undefined operand");
  BasicTensor<T> out(x.shape());
  {
    auto o = out.mutable_data();
    auto xd = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(xd[i]);
  }
  if (x.requires_grad()) {
    tape.record(out, [out, x, bwd]() mutable {
      auto go = out.grad();
      auto od = out.data();
      auto xd = x.data();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += bwd(xd[i], od[i], go[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(BasicTape<T>& tape, const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  kernels::Conv2dGeometry g;
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.out_channels = weight.dim(0);
  g.kernel_h = weight.dim(2);
  g.kernel_w = weight.dim(3);
  g.stride = stride;
  g.padding = padding;
  if (weight.dim(1) != g.in_channels) {
    throw DimensionError("conv2d: input has " + std::to_string(g.in_channels) + " channels but weight " +
                         shape_str(weight.shape()) + " expects " + std::to_string(weight.dim(1)));
  }
  if (g.in_h + 2 * padding < g.kernel_h || g.in_w + 2 * padding < g.kernel_w) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.kernel_h) + "x" + std::to_string(g.kernel_w) +
                         " does not fit padded input " + shape_str(input.shape()) + " with padding " +
                         std::to_string(padding));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.out_channels)) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(g.out_channels) + " output channels");
  }
  BasicTensor<T> out(Shape{g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward<T>(g, input.data(), weight.data(), bias.defined() ? bias.data() : std::span<const T>{},
                             out.mutable_data());
  if (BasicTape<T>::any_requires_grad({&input, &weight, &bias})) {
    tape.record(out, [out, input, weight, bias, g]() mutable {
      auto go = out.grad();
      if (input.requires_grad()) kernels::conv2d_backward_input<T>(g, go, weight.data(), input.mutable_grad());
      const bool want_w = weight.requires_grad();
      const bool want_b = bias.defined() && bias.requires_grad();
      if (want_w || want_b) {
        kernels::conv2d_backward_params<T>(g, input.data(), go, want_w ? weight.mutable_grad() : std::span<T>{},
                                           want_b ? bias.mutable_grad() : std::span<T>{});
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> relu(BasicTape<T>& tape, const BasicTensor<T>& x) {
  return unary(
      tape, x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T, T g) { return v > T(0) ? g : T(0); });
}

template <typename T>
BasicTensor<T> sigmoid(BasicTape<T>& tape, const BasicTensor<T>& x) {
  return unary(
      tape, x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y, T g) { return g * y * (T(1) - y); });
}

template <typename T>
BasicTensor<T> abs(BasicTape<T>& tape, const BasicTensor<T>& x) {
  return unary(
      tape, x, [](T v) { return std::abs(v); },
      [](T v, T, T g) { return v > T(0) ? g : (v < T(0) ? -g : T(0)); });
}

template <typename T>
BasicTensor<T> rms_normalize(BasicTape<T>& tape, const BasicTensor<T>& x, T epsilon) {
  if (!x.defined() || x.rank() == 0 || x.dim(0) == 0) throw DimensionError("rms_normalize: need a non-empty batch");
  if (!(epsilon > T(0))) throw DimensionError("rms_normalize: epsilon must be positive");
  const std::size_t batch = x.dim(0), per = x.numel() / batch;
  BasicTensor<T> out(x.shape());
  auto scale = std::make_shared<std::vector<T>>(batch);
  {
    auto xd = x.data();
    auto o = out.mutable_data();
    for (std::size_t n = 0; n < batch; ++n) {
      T ss = 0;
      for (std::size_t i = 0; i < per; ++i) ss += xd[n * per + i] * xd[n * per + i];
      const T r = std::sqrt(ss / static_cast<T>(per) + epsilon * epsilon);
      (*scale)[n] = r;
      for (std::size_t i = 0; i < per; ++i) o[n * per + i] = xd[n * per + i] / r;
    }
  }
  if (x.requires_grad()) {
    tape.record(out, [out, x, scale, batch, per]() mutable {
      auto go = out.grad();
      auto od = out.data();
      auto gx = x.mutable_grad();
      // dx = (g - y * mean(g * y)) / r
      for (std::size_t n = 0; n < batch; ++n) {
        T gy = 0;
        for (std::size_t i = 0; i < per; ++i) gy += go[n * per + i] * od[n * per + i];
        gy /= static_cast<T>(per);
        const T r = (*scale)[n];
        for (std::size_t i = 0; i < per; ++i) gx[n * per + i] += (go[n * per + i] - od[n * per + i] * gy) / r;
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> add(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(
      tape, a, b, "add", [](T x, T y) { return x + y; },
      [](T, T, T g, T& da, T& db) {
        da = g;
        db = g;
      });
}

template <typename T>
BasicTensor<T> sub(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(
      tape, a, b, "sub", [](T x, T y) { return x - y; },
      [](T, T, T g, T& da, T& db) {
        da = g;
        db = -g;
      });
}

template <typename T>
BasicTensor<T> mul(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(
      tape, a, b, "mul", [](T x, T y) { return x * y; },
      [](T x, T y, T g, T& da, T& db) {
        da = g * y;
        db = g * x;
      });
}

template <typename T>
BasicTensor<T> div(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(
      tape, a, b, "div", [](T x, T y) { return x / y; },
      [](T x, T y, T g, T& da, T& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

template <typename T>
BasicTensor<T> scale(BasicTape<T>& tape, const BasicTensor<T>& x, T factor) {
  return unary(
      tape, x, [factor](T v) { return v * factor; }, [factor](T, T, T g) { return g * factor; });
}

template <typename T>
BasicTensor<T> add_scalar(BasicTape<T>& tape, const BasicTensor<T>& x, T value) {
  return unary(
      tape, x, [value](T v) { return v + value; }, [](T, T, T g) { return g; });
}

template <typename T>
BasicTensor<T> sum(BasicTape<T>& tape, const BasicTensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  auto out = BasicTensor<T>::scalar(acc);
  if (x.requires_grad()) {
    tape.record(out, [out, x]() mutable {
      const T g = out.grad()[0];
      for (auto& v : x.mutable_grad()) v += g;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> mean(BasicTape<T>& tape, const BasicTensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  T acc = 0;
  for (T v : x.data()) acc += v;
  const T n = static_cast<T>(x.numel());
  auto out = BasicTensor<T>::scalar(acc / n);
  if (x.requires_grad()) {
    tape.record(out, [out, x, n]() mutable {
      const T g = out.grad()[0] / n;
      for (auto& v : x.mutable_grad()) v += g;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> max_pool2d(BasicTape<T>& tape, const BasicTensor<T>& x, std::size_t kernel, std::size_t stride,
                          std::size_t padding) {
  require_rank(x, 4, "max_pool2d", "input");
  if (kernel == 0 || stride == 0) throw DimensionError("max_pool2d: kernel and stride must be positive");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h + 2 * padding < kernel || w + 2 * padding < kernel) {
    throw DimensionError("max_pool2d: window " + std::to_string(kernel) + " does not fit input " +
                         shape_str(x.shape()));
  }
  const std::size_t oh = (h + 2 * padding - kernel) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kernel) / stride + 1;
  BasicTensor<T> out(Shape{n, c, oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  auto xd = x.data();
  auto od = out.mutable_data();
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_i = std::numeric_limits<std::size_t>::max();
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const std::size_t i = (p * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
            if (best_i == std::numeric_limits<std::size_t>::max() || xd[i] > best) {
              best = xd[i];
              best_i = i;
            }
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        od[o] = best;
        argmax[o] = best_i;
      }
    }
  }
  if (x.requires_grad()) {
    tape.record(out, [out, x, argmax = std::move(argmax)]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t o = 0; o < go.size(); ++o) gx[argmax[o]] += go[o];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool(BasicTape<T>& tape, const BasicTensor<T>& x) {
  require_rank(x, 4, "global_avg_pool", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (plane == 0) throw DimensionError("global_avg_pool: empty spatial extent");
  BasicTensor<T> out(Shape{n, c});
  auto xd = x.data();
  auto od = out.mutable_data();
  for (std::size_t p = 0; p < n * c; ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += xd[p * plane + i];
    od[p] = acc / static_cast<T>(plane);
  }
  if (x.requires_grad()) {
    tape.record(out, [out, x, plane]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t p = 0; p < go.size(); ++p) {
        const T g = go[p] / static_cast<T>(plane);
        for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += g;
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> matmul(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "matmul", "left operand");
  require_rank(b, 2, "matmul", "right operand");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  BasicTensor<T> out(Shape{m, n});
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ad[i * k + p];
      for (std::size_t j = 0; j < n; ++j) od[i * n + j] += av * bd[p * n + j];
    }
  if (BasicTape<T>::any_requires_grad({&a, &b})) {
    tape.record(out, [out, a, b, m, k, n]() mutable {
      auto go = out.grad();
      auto ad = a.data();
      auto bd = b.data();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            T acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * bd[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T av = ad[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * go[i * n + j];
          }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> linear(BasicTape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  const std::size_t n = x.dim(0), k = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != k) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != o)) {
    throw DimensionError("linear: bias shape " + shape_str(bias.shape()) + " does not match " + std::to_string(o) +
                         " outputs");
  }
  BasicTensor<T> out(Shape{n, o});
  auto xd = x.data();
  auto wd = weight.data();
  auto od = out.mutable_data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < o; ++j) {
      T acc = bias.defined() ? bias.data()[j] : T(0);
      for (std::size_t p = 0; p < k; ++p) acc += xd[r * k + p] * wd[j * k + p];
      od[r * o + j] = acc;
    }
  if (BasicTape<T>::any_requires_grad({&x, &weight, &bias})) {
    tape.record(out, [out, x, weight, bias, n, k, o]() mutable {
      auto go = out.grad();
      auto xd = x.data();
      auto wd = weight.data();
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < o; ++j)
            for (std::size_t p = 0; p < k; ++p) gx[r * k + p] += go[r * o + j] * wd[j * k + p];
      }
      if (weight.requires_grad()) {
        auto gw = weight.mutable_grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < o; ++j)
            for (std::size_t p = 0; p < k; ++p) gw[j * k + p] += go[r * o + j] * xd[r * k + p];
      }
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.mutable_grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < o; ++j) gb[j] += go[r * o + j];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(BasicTape<T>& tape, const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  for (const auto& p : parts) require_rank(p, 4, "concat_channels", "part");
  const std::size_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  std::size_t channels = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w) {
      throw DimensionError("concat_channels: " + shape_str(p.shape()) + " incompatible with " +
                           shape_str(parts[0].shape()));
    }
    channels += p.dim(1);
  }
  const std::size_t plane = h * w;
  BasicTensor<T> out(Shape{n, channels, h, w});
  auto od = out.mutable_data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.dim(1);
    auto pd = p.data();
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(pd.begin() + static_cast<long>(b * c * plane), c * plane,
                  od.begin() + static_cast<long>((b * channels + offset) * plane));
    offset += p.dim(1);
  }
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (any) {
    tape.record(out, [out, parts, n, channels, plane]() mutable {
      auto go = out.grad();
      std::size_t offset = 0;
      for (auto& p : parts) {
        const std::size_t c = p.dim(1);
        if (p.requires_grad()) {
          auto gp = p.mutable_grad();
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < c * plane; ++i) gp[b * c * plane + i] += go[(b * channels + offset) * plane + i];
        }
        offset += c;
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_channels(BasicTape<T>& tape, const BasicTensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank(x, 4, "slice_channels", "input");
  if (begin >= end || end > x.dim(1)) {
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3), k = end - begin;
  BasicTensor<T> out(Shape{n, k, x.dim(2), x.dim(3)});
  auto xd = x.data();
  auto od = out.mutable_data();
  for (std::size_t b = 0; b < n; ++b)
    std::copy_n(xd.begin() + static_cast<long>((b * c + begin) * plane), k * plane,
                od.begin() + static_cast<long>(b * k * plane));
  if (x.requires_grad()) {
    tape.record(out, [out, x, n, c, plane, k, begin]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < k * plane; ++i) gx[(b * c + begin) * plane + i] += go[b * k * plane + i];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> reshape(BasicTape<T>& tape, const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto out = x.reshaped_copy(std::move(shape));
  if (x.requires_grad()) {
    tape.record(out, [out, x]() mutable {
      auto go = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

#define CAH_INSTANTIATE_OPS(T)                                                                                \
  template BasicTensor<T> conv2d(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                 const BasicTensor<T>&, std::size_t, std::size_t);                            \
  template BasicTensor<T> relu(BasicTape<T>&, const BasicTensor<T>&);                                         \
  template BasicTensor<T> sigmoid(BasicTape<T>&, const BasicTensor<T>&);                                      \
  template BasicTensor<T> abs(BasicTape<T>&, const BasicTensor<T>&);                                          \
  template BasicTensor<T> rms_normalize(BasicTape<T>&, const BasicTensor<T>&, T);                             \
  template BasicTensor<T> add(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> sub(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> mul(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> div(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> scale(BasicTape<T>&, const BasicTensor<T>&, T);                                     \
  template BasicTensor<T> add_scalar(BasicTape<T>&, const BasicTensor<T>&, T);                                \
  template BasicTensor<T> sum(BasicTape<T>&, const BasicTensor<T>&);                                          \
  template BasicTensor<T> mean(BasicTape<T>&, const BasicTensor<T>&);                                         \
  template BasicTensor<T> max_pool2d(BasicTape<T>&, const BasicTensor<T>&, std::size_t, std::size_t,          \
                                     std::size_t);                                                            \
  template BasicTensor<T> global_avg_pool(BasicTape<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> matmul(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> linear(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                 const BasicTensor<T>&);                                                      \
  template BasicTensor<T> concat_channels(BasicTape<T>&, const std::vector<BasicTensor<T>>&);                 \
  template BasicTensor<T> slice_channels(BasicTape<T>&, const BasicTensor<T>&, std::size_t, std::size_t);     \
  template BasicTensor<T> reshape(BasicTape<T>&, const BasicTensor<T>&, Shape);

CAH_INSTANTIATE_OPS(float)
CAH_INSTANTIATE_OPS(double)

}  // namespace cah::ops
