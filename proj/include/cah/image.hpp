#pragma once

// Grayscale images in [0, 1] and their PNG / PGM codecs.

#include <array>
#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "cah/tensor.hpp"

namespace cah {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // row-major

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool empty() const { return pixels.empty(); }

  /// Sub-image with top-left corner (x0, y0).
  Image crop(std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) const;
};

template <typename T = double>
BasicTensor<T> to_tensor(const Image& img) {
  return BasicTensor<T>(Shape{1, 1, img.height, img.width}, std::vector<T>(img.pixels.begin(), img.pixels.end()));
}

/// Accepts [1, 1, H, W] or [H, W].
template <typename T>
Image to_image(const BasicTensor<T>& t) {
  if (!(t.rank() == 2 || (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 1))) {
    throw DimensionError("to_image: expected a single-channel tensor, got " + shape_str(t.shape()));
  }
  Image img(t.dim(t.rank() - 1), t.dim(t.rank() - 2));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(t[i]);
  return img;
}

/// Standard luma weights for color to gray.
inline constexpr std::array<double, 3> kLumaWeights{0.299, 0.587, 0.114};

/// PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette) or binary PGM (P5).
/// Color is reduced to gray with kLumaWeights; alpha is dropped.
Image read_image(const std::filesystem::path& path);

/// Chosen by extension: .png or .pgm. Values are clamped to [0, 1].
void write_image(const std::filesystem::path& path, const Image& img, int bit_depth = 8);

void write_png(const std::filesystem::path& path, const Image& img, int bit_depth = 8);
void write_pgm(const std::filesystem::path& path, const Image& img, int bit_depth = 8);

/// 8-bit RGB PNG from three equally sized planes.
void write_png_rgb(const std::filesystem::path& path, const Image& r, const Image& g, const Image& b);

struct RgbPlanes {
  Image r, g, b;
};

/// R = target, G = B = warped: misalignment shows as red or cyan-green ghosts.
RgbPlanes ghost_overlay(const Image& warped, const Image& target);

}  // namespace cah
