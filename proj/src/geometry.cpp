#include "cah/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace cah {

namespace {

constexpr const char* kCornerNames[4] = {"top-left", "top-right", "bottom-left", "bottom-right"};

// Similarity taking the centroid to the origin and the mean distance to sqrt(2).
Eigen::Matrix3d hartley_transform(std::span<const Point2> pts) {
  double cx = 0, cy = 0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double dist = 0;
  for (const auto& p : pts) dist += std::hypot(p.x - cx, p.y - cy);
  dist /= static_cast<double>(pts.size());
  if (!(dist > 0)) throw GeometryError("degenerate point set: all points coincide");
  const double s = std::sqrt(2.0) / dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

std::vector<Point2> transform_points(const Eigen::Matrix3d& t, std::span<const Point2> pts) {
  std::vector<Point2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back({t(0, 0) * p.x + t(0, 2), t(1, 1) * p.y + t(1, 2)});
  return out;
}

double cross(Point2 a, Point2 b, Point2 c) { return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x); }

// Rejects any three collinear points among exactly four (scale-relative).
void check_general_position(std::span<const Point2> pts, const char* const* names) {
  double extent = 0;
  for (const auto& p : pts)
    for (const auto& q : pts) extent = std::max(extent, std::hypot(p.x - q.x, p.y - q.y));
  const double floor = 1e-10 * extent * extent;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      for (int k = j + 1; k < 4; ++k) {
        if (std::abs(cross(pts[i], pts[j], pts[k])) <= floor) {
          std::string msg = "singular corner system: points ";
          if (names) {
            msg += std::string(names[i]) + ", " + names[j] + ", " + names[k];
          } else {
            msg += std::to_string(i) + ", " + std::to_string(j) + ", " + std::to_string(k);
          }
          throw GeometryError(msg + " are collinear");
        }
      }
}

using Matrix8d = Eigen::Matrix<double, 8, 8>;
using Vector8d = Eigen::Matrix<double, 8, 1>;

void fill_four_point_system(std::span<const Point2> src, std::span<const Point2> dst, Matrix8d& a, Vector8d& b) {
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
    a.row(2 * i) << x, y, 1, 0, 0, 0, -x * u, -y * u;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -x * v, -y * v;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
}

Eigen::Matrix3d solve_four_point(std::span<const Point2> src, std::span<const Point2> dst) {
  Matrix8d a;
  Vector8d b;
  fill_four_point_system(src, dst, a, b);
  Eigen::PartialPivLU<Matrix8d> lu(a);
  if (!(lu.rcond() > 1e-14)) throw GeometryError("singular 4-point system");
  const Vector8d h = lu.solve(b);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return m;
}

Eigen::Matrix3d solve_homogeneous(std::span<const Point2> src, std::span<const Point2> dst) {
  const Eigen::Index n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
    a.row(2 * i) << x, y, 1, 0, 0, 0, -x * u, -y * u, -u;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -x * v, -y * v, -v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (!(s(7) > 1e-12 * s(0))) throw GeometryError("degenerate correspondence configuration: solution not unique");
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return m;
}

}  // namespace

std::array<Point2, 4> Frame::corners() const {
  const double w = static_cast<double>(width) - 1.0, h = static_cast<double>(height) - 1.0;
  return {Point2{0, 0}, Point2{w, 0}, Point2{0, h}, Point2{w, h}};
}

Homography::Homography(const Eigen::Matrix3d& m) {
  if (!m.allFinite()) throw GeometryError("homography has non-finite entries");
  if (!(std::abs(m(2, 2)) >= kMinBottomRight)) {
    throw GeometryError("homography bottom-right element below canonicalization floor");
  }
  m_ = m / m(2, 2);
  if (!(std::abs(m_.determinant()) >= kMinDeterminant)) throw GeometryError("homography is singular");
}

Homography Homography::translation(double dx, double dy) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = dx;
  m(1, 2) = dy;
  return Homography(m);
}

std::array<double, 9> Homography::values() const {
  std::array<double, 9> v{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v[static_cast<std::size_t>(3 * r + c)] = m_(r, c);
  return v;
}

Point2 Homography::apply(Point2 p) const {
  const double w = m_(2, 0) * p.x + m_(2, 1) * p.y + m_(2, 2);
  if (!(std::abs(w) >= kMinHomogeneousW)) throw GeometryError("point maps to the plane at infinity");
  return {(m_(0, 0) * p.x + m_(0, 1) * p.y + m_(0, 2)) / w, (m_(1, 0) * p.x + m_(1, 1) * p.y + m_(1, 2)) / w};
}

CornerOffsets CornerOffsets::from_values(std::span<const double> values, Frame frame) {
  if (values.size() != 8) throw GeometryError("corner offsets need 8 values, got " + std::to_string(values.size()));
  CornerOffsets c;
  c.frame = frame;
  for (std::size_t i = 0; i < 4; ++i) c.offsets[i] = {values[2 * i], values[2 * i + 1]};
  return c;
}

std::array<double, 8> CornerOffsets::values() const {
  std::array<double, 8> v{};
  for (std::size_t i = 0; i < 4; ++i) {
    v[2 * i] = offsets[i].x;
    v[2 * i + 1] = offsets[i].y;
  }
  return v;
}

std::array<Point2, 4> CornerOffsets::displaced_corners() const {
  auto c = frame.corners();
  for (std::size_t i = 0; i < 4; ++i) {
    c[i].x += offsets[i].x;
    c[i].y += offsets[i].y;
  }
  return c;
}

Homography offsets_to_homography(const CornerOffsets& offsets) {
  if (offsets.frame.width < 2 || offsets.frame.height < 2) throw GeometryError("frame must be at least 2x2");
  for (const auto& o : offsets.offsets)
    if (!std::isfinite(o.x) || !std::isfinite(o.y)) throw GeometryError("non-finite corner offset");
  if (std::all_of(offsets.offsets.begin(), offsets.offsets.end(), [](Point2 o) { return o.x == 0 && o.y == 0; })) {
    return Homography::identity();
  }
  const auto src = offsets.frame.corners();
  const auto dst = offsets.displaced_corners();
  check_general_position(dst, kCornerNames);
  const Eigen::Matrix3d t_src = hartley_transform(src);
  const Eigen::Matrix3d t_dst = hartley_transform(dst);
  const auto ns = transform_points(t_src, src);
  const auto nd = transform_points(t_dst, dst);
  const Eigen::Matrix3d hn = solve_four_point(ns, nd);
  return Homography(t_dst.inverse() * hn * t_src);
}

std::array<double, 8> offsets_to_homography_backward(const CornerOffsets& offsets,
                                                     const std::array<double, 9>& grad_h) {
  const Homography h = offsets_to_homography(offsets);
  const auto src = offsets.frame.corners();
  const auto dst = offsets.displaced_corners();
  Matrix8d a;
  Vector8d b;
  fill_four_point_system(src, dst, a, b);
  // Column equilibration: lambda = A^-T g = (A D)^-T (D g).
  Vector8d d;
  for (int j = 0; j < 8; ++j) {
    const double m = a.col(j).cwiseAbs().maxCoeff();
    d(j) = m > 0 ? 1.0 / m : 1.0;
  }
  const Matrix8d ad = a * d.asDiagonal();
  Vector8d g;
  for (int j = 0; j < 8; ++j) g(j) = grad_h[static_cast<std::size_t>(j)] * d(j);
  Eigen::PartialPivLU<Matrix8d> lu(ad.transpose());
  if (!(lu.rcond() > 1e-14)) throw GeometryError("singular corner system in backward pass");
  const Vector8d lambda = lu.solve(g);
  std::array<double, 8> out{};
  const auto& m = h.matrix();
  for (std::size_t i = 0; i < 4; ++i) {
    const double w = m(2, 0) * src[i].x + m(2, 1) * src[i].y + 1.0;
    out[2 * i] = lambda(static_cast<Eigen::Index>(2 * i)) * w;
    out[2 * i + 1] = lambda(static_cast<Eigen::Index>(2 * i + 1)) * w;
  }
  return out;
}

CornerOffsets homography_to_offsets(const Homography& h, Frame frame) {
  CornerOffsets c;
  c.frame = frame;
  const auto corners = frame.corners();
  for (std::size_t i = 0; i < 4; ++i) {
    const Point2 p = h.apply(corners[i]);
    c.offsets[i] = {p.x - corners[i].x, p.y - corners[i].y};
  }
  return c;
}

std::vector<Point2> apply(const Homography& h, std::span<const Point2> points) {
  std::vector<Point2> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(h.apply(p));
  return out;
}

Homography inverse(const Homography& h) {
  if (!(std::abs(h.matrix().determinant()) >= kMinDeterminant)) throw GeometryError("cannot invert singular homography");
  return Homography(h.matrix().inverse());
}

Homography compose(const Homography& a, const Homography& b) { return Homography(a.matrix() * b.matrix()); }

Homography dlt_from_correspondences(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size()) throw GeometryError("source and destination point counts differ");
  if (src.size() < 4) throw GeometryError("DLT needs at least 4 correspondences, got " + std::to_string(src.size()));
  const Eigen::Matrix3d t_src = hartley_transform(src);
  const Eigen::Matrix3d t_dst = hartley_transform(dst);
  const auto ns = transform_points(t_src, src);
  const auto nd = transform_points(t_dst, dst);
  Eigen::Matrix3d hn;
  if (src.size() == 4) {
    check_general_position(ns, nullptr);
    check_general_position(nd, nullptr);
    hn = solve_four_point(ns, nd);
  } else {
    hn = solve_homogeneous(ns, nd);
  }
  return Homography(t_dst.inverse() * hn * t_src);
}

double mean_corner_error(const Homography& a, const Homography& b, Frame frame) {
  double acc = 0;
  for (const auto& c : frame.corners()) {
    const Point2 p = a.apply(c), q = b.apply(c);
    acc += std::hypot(p.x - q.x, p.y - q.y);
  }
  return acc / 4.0;
}

std::string format_homography(const Homography& h) {
  std::string out;
  char buf[32];
  const auto v = h.values();
  for (std::size_t i = 0; i < 9; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    if (i) out += ' ';
    out += buf;
  }
  return out;
}

Homography parse_homography(std::string_view text) {
  std::istringstream in{std::string(text)};
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) {
    if (!(in >> m(i / 3, i % 3))) throw GeometryError("homography text needs 9 numbers");
  }
  std::string rest;
  if (in >> rest) throw GeometryError("unexpected trailing text after homography: " + rest);
  return Homography(m);
}

template <typename T>
BasicTensor<T> offsets_to_homography(BasicTape<T>& tape, const BasicTensor<T>& offsets, Frame frame) {
  if (offsets.numel() != 8) throw DimensionError("offsets tensor must hold 8 values, got " + shape_str(offsets.shape()));
  std::array<double, 8> v{};
  for (std::size_t i = 0; i < 8; ++i) v[i] = static_cast<double>(offsets.data()[i]);
  const CornerOffsets co = CornerOffsets::from_values(v, frame);
  const auto hv = offsets_to_homography(co).values();
  BasicTensor<T> out(Shape{3, 3});
  for (std::size_t i = 0; i < 9; ++i) out.mutable_data()[i] = static_cast<T>(hv[i]);
  if (offsets.requires_grad()) {
    tape.record(out, [out, offsets, co]() mutable {
      std::array<double, 9> g{};
      for (std::size_t i = 0; i < 9; ++i) g[i] = static_cast<double>(out.grad()[i]);
      const auto go = offsets_to_homography_backward(co, g);
      auto gx = offsets.mutable_grad();
      for (std::size_t i = 0; i < 8; ++i) gx[i] += static_cast<T>(go[i]);
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> normalize_homography(BasicTape<T>& tape, const BasicTensor<T>& h) {
  if (h.numel() != 9) throw DimensionError("homography tensor must hold 9 values, got " + shape_str(h.shape()));
  const T last = h.data()[8];
  if (!(std::abs(static_cast<double>(last)) >= kMinBottomRight)) {
    throw GeometryError("homography product is degenerate: bottom-right element vanishes");
  }
  BasicTensor<T> out(Shape{3, 3});
  for (std::size_t i = 0; i < 9; ++i) out.mutable_data()[i] = h.data()[i] / last;
  if (h.requires_grad()) {
    tape.record(out, [out, h, last]() mutable {
      auto go = out.grad();
      auto gh = h.mutable_grad();
      T dot = 0;
      for (std::size_t i = 0; i < 9; ++i) {
        gh[i] += go[i] / last;
        dot += go[i] * h.data()[i];
      }
      gh[8] -= dot / (last * last);
    });
  }
  return out;
}

template <typename T>
Homography to_homography(const BasicTensor<T>& h) {
  if (h.numel() != 9) throw DimensionError("homography tensor must hold 9 values, got " + shape_str(h.shape()));
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = static_cast<double>(h.data()[static_cast<std::size_t>(i)]);
  return Homography(m);
}

template <typename T>
BasicTensor<T> to_tensor(const Homography& h) {
  BasicTensor<T> out(Shape{3, 3});
  const auto v = h.values();
  for (std::size_t i = 0; i < 9; ++i) out.mutable_data()[i] = static_cast<T>(v[i]);
  return out;
}

template BasicTensor<float> offsets_to_homography(BasicTape<float>&, const BasicTensor<float>&, Frame);
template BasicTensor<double> offsets_to_homography(BasicTape<double>&, const BasicTensor<double>&, Frame);
template BasicTensor<float> normalize_homography(BasicTape<float>&, const BasicTensor<float>&);
template BasicTensor<double> normalize_homography(BasicTape<double>&, const BasicTensor<double>&);
template Homography to_homography(const BasicTensor<float>&);
template Homography to_homography(const BasicTensor<double>&);
template BasicTensor<float> to_tensor<float>(const Homography&);
template BasicTensor<double> to_tensor<double>(const Homography&);

}  // namespace cah
