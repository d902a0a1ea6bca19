#pragma once

// Homography algebra: 4-point corner-offset parameterization, DLT, point
// transfer, composition and the analytic adjoint of the corner solve.

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cah/tape.hpp"
#include "cah/tensor.hpp"

namespace cah {

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Patch extents anchoring the canonical corners.
struct Frame {
  std::size_t width = 0;
  std::size_t height = 0;

  /// (0,0), (W-1,0), (0,H-1), (W-1,H-1).
  std::array<Point2, 4> corners() const;
};

/// Bottom-right magnitude below which a matrix cannot be canonicalized.
inline constexpr double kMinBottomRight = 1e-12;
/// Determinant magnitude floor of a canonical homography.
inline constexpr double kMinDeterminant = 1e-12;
/// Homogeneous coordinate floor for point transfer.
inline constexpr double kMinHomogeneousW = 1e-12;

/// 3x3 projective transform kept in canonical form (m(2,2) == 1).
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  /// Canonicalizes; throws GeometryError when degenerate.
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography identity() { return Homography(); }
  static Homography translation(double dx, double dy);

  const Eigen::Matrix3d& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }
  /// Row-major entries.
  std::array<double, 9> values() const;

  Point2 apply(Point2 p) const;

 private:
  Eigen::Matrix3d m_;
};

/// Four corner displacement vectors (pixels) relative to a frame's canonical
/// corners, in Frame::corners() order.
struct CornerOffsets {
  std::array<Point2, 4> offsets{};
  Frame frame;

  static CornerOffsets from_values(std::span<const double> values, Frame frame);
  std::array<double, 8> values() const;
  std::array<Point2, 4> displaced_corners() const;
};

Homography offsets_to_homography(const CornerOffsets& offsets);

/// Gradient of a scalar w.r.t. the 8 offset values, given its gradient w.r.t.
/// the 9 row-major entries of offsets_to_homography(offsets). The (2,2) entry
/// is fixed at 1 and receives no credit.
std::array<double, 8> offsets_to_homography_backward(const CornerOffsets& offsets,
                                                     const std::array<double, 9>& grad_h);

/// Offsets that the canonical frame corners undergo under h.
CornerOffsets homography_to_offsets(const Homography& h, Frame frame);

std::vector<Point2> apply(const Homography& h, std::span<const Point2> points);
Homography inverse(const Homography& h);
/// a * b: apply b first, then a.
Homography compose(const Homography& a, const Homography& b);

/// Least-squares DLT with Hartley normalization. Exactly four pairs solve the
/// 8x8 system directly; more pairs use the homogeneous 2n x 9 system.
Homography dlt_from_correspondences(std::span<const Point2> src, std::span<const Point2> dst);

/// Mean distance between where a and b send the frame's corners.
double mean_corner_error(const Homography& a, const Homography& b, Frame frame);

/// Nine numbers, row-major, space separated, round-trip precision.
std::string format_homography(const Homography& h);
Homography parse_homography(std::string_view text);

// Tape-aware versions used by the training graph. Homography tensors have
// shape [3, 3].

/// offsets: 8 values (any shape) in CornerOffsets::values() order.
template <typename T>
BasicTensor<T> offsets_to_homography(BasicTape<T>& tape, const BasicTensor<T>& offsets, Frame frame);

/// h / h(2,2).
template <typename T>
BasicTensor<T> normalize_homography(BasicTape<T>& tape, const BasicTensor<T>& h);

template <typename T>
Homography to_homography(const BasicTensor<T>& h);
template <typename T>
BasicTensor<T> to_tensor(const Homography& h);

}  // namespace cah
