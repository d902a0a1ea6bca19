#pragma once

// Synthetic image pairs with exact ground truth, the labeled-points
// annotation format, and synthetic correspondence sets for robust fitting.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cah/geometry.hpp"
#include "cah/image.hpp"

namespace cah {

/// Regular, low-texture, low-light, small-foreground, large-foreground.
enum class Category { RE, LT, LL, SF, LF };

inline constexpr std::array<Category, 5> kCategories{Category::RE, Category::LT, Category::LL, Category::SF,
                                                     Category::LF};

std::string to_string(Category c);
Category parse_category(std::string_view s);

enum class Motion { homography, translation };

struct Range {
  double lo = 0;
  double hi = 0;
};

struct GenConfig {
  std::size_t width = 64;
  std::size_t height = 64;
  /// Max corner displacement in pixels; negative means 8% of the smaller side.
  double perturbation_px = -1;
  Motion motion = Motion::homography;
  /// Octaves of value noise in the RE base texture.
  int texture_octaves = 4;
  /// Number of geometric primitives drawn over the base texture.
  int primitives = 6;
  /// Contrast of the LT texture relative to RE.
  double low_texture_contrast = 0.05;
  /// LL: luminance scale of the base texture, then gain/offset on patch b.
  double low_light_scale = 0.25;
  Range low_light_gain{0.7, 1.3};
  Range low_light_offset{-0.03, 0.03};
  double low_light_noise = 0.01;
  /// Extra gain on patch b for every category: 1 + U(-g, g). Zero keeps pairs exact.
  double illumination_gain = 0;
  /// Area fraction of the moving foreground.
  Range small_foreground{0.06, 0.14};
  Range large_foreground{0.25, 0.40};
  /// Additive Gaussian noise on both patches (all categories).
  double noise = 0;
  std::uint64_t seed = 1;

  double max_perturbation() const;
  void validate() const;
};

struct Correspondence {
  Point2 a, b;
  bool operator==(const Correspondence&) const = default;
};

struct PairSample {
  Image patch_a, patch_b;
  Homography gt_homography;  // a -> b
  std::vector<Correspondence> gt_points;
  /// On patch_a: 1 where content moves independently of the homography.
  std::optional<Image> dynamic_region;
  /// On patch_b: 1 where the moved foreground lands.
  std::optional<Image> dynamic_region_b;
  Category category = Category::RE;
  /// Photometric change between the patches (gain, offset or noise).
  bool photometric = false;
  std::uint64_t index = 0;
};

/// Pure in (config, category, index).
PairSample generate_pair(const GenConfig& cfg, Category category, std::uint64_t index = 0);

/// 1 on patch_b where it equals warp(patch_a, gt) by construction: inside the
/// warped frame and away from both foreground footprints.
Image static_mask_b(const PairSample& s);

/// Mean squared finite-difference gradient of an image.
double gradient_energy(const Image& img);

struct CropPair {
  Image a, b;
  std::size_t x0 = 0, y0 = 0;
};

/// Aligned crops of both images at one uniformly random location.
CropPair random_crop_pair(const Image& a, const Image& b, std::size_t crop_w, std::size_t crop_h,
                          std::mt19937_64& rng);

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Header "path_a path_b CATEGORY", then "x_a y_a x_b y_b" per line.
struct Annotation {
  std::string path_a, path_b;
  Category category = Category::RE;
  std::vector<Correspondence> points;
  bool operator==(const Annotation&) const = default;
};

void write_annotation(std::ostream& out, const Annotation& ann);
void write_annotation(const std::filesystem::path& path, const Annotation& ann);
/// `source` prefixes error messages.
Annotation read_annotation(std::istream& in, const std::string& source = "annotation");
Annotation read_annotation(const std::filesystem::path& path);

/// One annotation path per line; relative entries resolve against the manifest's directory.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path);

struct CorrespondenceSet {
  std::vector<Point2> src, dst;
  std::vector<bool> inlier;
};

/// `count` points uniform in the frame, mapped by h with Gaussian noise;
/// a `outlier_fraction` share gets uniformly random destinations instead.
CorrespondenceSet synthetic_correspondences(const Homography& h, Frame frame, std::size_t count,
                                            double outlier_fraction, double noise_sigma, std::mt19937_64& rng);

}  // namespace cah
