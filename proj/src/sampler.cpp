#include "cah/sampler.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "cah/kernels.hpp"

namespace cah {

namespace {

template <typename T>
kernels::WarpGeometry warp_geometry(const BasicTensor<T>& input) {
  if (!input.defined() || input.rank() != 4) {
    throw DimensionError("warp: input must be NCHW, got " +
                         (input.defined() ? shape_str(input.shape()) : std::string("<undefined>")));
  }
  if (input.dim(2) < 2 || input.dim(3) < 2) {
    throw DimensionError("warp: spatial extents must be at least 2, got " + shape_str(input.shape()));
  }
  return {input.dim(0) * input.dim(1), input.dim(2), input.dim(3)};
}

Eigen::Matrix3d sampling_matrix(const Eigen::Matrix3d& h) {
  const double det = h.determinant();
  const double scale = h.norm();
  if (!std::isfinite(det) || !(scale > 0) || !(std::abs(det) >= kMinDeterminant * scale * scale * scale)) {
    throw GeometryError("warp: homography is singular");
  }
  return h.inverse();
}

template <typename T>
BasicWarpResult<T> run_forward(const BasicTensor<T>& input, const Eigen::Matrix3d& sample_from) {
  const auto g = warp_geometry(input);
  BasicWarpResult<T> r{BasicTensor<T>(input.shape()), BasicTensor<T>(Shape{1, 1, g.height, g.width})};
  double m[9];
  for (int i = 0; i < 9; ++i) m[i] = sample_from(i / 3, i % 3);
  kernels::warp_bilinear<T>(g, input.data(), m, r.warped.mutable_data(), r.validity.mutable_data());
  return r;
}

}  // namespace

template <typename T>
BasicWarpResult<T> warp(BasicTape<T>& tape, const BasicTensor<T>& input, const BasicTensor<T>& h) {
  if (!h.defined() || h.numel() != 9) throw DimensionError("warp: homography tensor must hold 9 values");
  Eigen::Matrix3d hm;
  for (int i = 0; i < 9; ++i) hm(i / 3, i % 3) = static_cast<double>(h.data()[static_cast<std::size_t>(i)]);
  const Eigen::Matrix3d inv = sampling_matrix(hm);
  auto result = run_forward(input, inv);
  if (BasicTape<T>::any_requires_grad({&input, &h})) {
    const auto g = warp_geometry(input);
    auto out = result.warped;
    tape.record(out, [out, input, h, inv, g]() mutable {
      double m[9];
      for (int i = 0; i < 9; ++i) m[i] = inv(i / 3, i % 3);
      double gm[9] = {0};
      kernels::warp_bilinear_backward<T>(g, input.data(), m, out.grad(),
                                         input.requires_grad() ? input.mutable_grad() : std::span<T>{},
                                         h.requires_grad() ? gm : nullptr);
      if (h.requires_grad()) {
        Eigen::Matrix3d gi;
        for (int i = 0; i < 9; ++i) gi(i / 3, i % 3) = gm[i];
        // d(h^-1) = -h^-1 dh h^-1  =>  dL/dh = -h^-T G h^-T
        const Eigen::Matrix3d gh = -inv.transpose() * gi * inv.transpose();
        auto dst = h.mutable_grad();
        for (int i = 0; i < 9; ++i) dst[static_cast<std::size_t>(i)] += static_cast<T>(gh(i / 3, i % 3));
      }
    });
  }
  return result;
}

template <typename T>
BasicWarpResult<T> warp(const BasicTensor<T>& input, const Homography& h) {
  return run_forward(input, sampling_matrix(h.matrix()));
}

template BasicWarpResult<float> warp(BasicTape<float>&, const BasicTensor<float>&, const BasicTensor<float>&);
template BasicWarpResult<double> warp(BasicTape<double>&, const BasicTensor<double>&, const BasicTensor<double>&);
template BasicWarpResult<float> warp(const BasicTensor<float>&, const Homography&);
template BasicWarpResult<double> warp(const BasicTensor<double>&, const Homography&);

}  // namespace cah
