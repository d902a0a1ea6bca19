#include "cah/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

namespace cah {

Image Image::crop(std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) const {
  if (x0 + w > width || y0 + h > height) {
    throw DimensionError("crop " + std::to_string(w) + "x" + std::to_string(h) + " at (" + std::to_string(x0) + ", " +
                         std::to_string(y0) + ") exceeds image " + std::to_string(width) + "x" +
                         std::to_string(height));
  }
  Image out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    std::copy_n(pixels.begin() + static_cast<long>((y0 + y) * width + x0), w, out.pixels.begin() + static_cast<long>(y * w));
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw ImageError("cannot open " + path.string() + ": " + std::strerror(errno));
  return f;
}

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

double quantize_max(int bit_depth) { return bit_depth == 16 ? 65535.0 : 255.0; }

unsigned to_level(double v, double maxv) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned>(std::lround(c * maxv));
}

void check_depth(int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw ImageError("bit depth must be 8 or 16, got " + std::to_string(bit_depth));
}

Image read_png(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw ImageError("libpng: out of memory");
  png_infop info = png_create_info_struct(png);
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError("cannot decode PNG " + path.string() + ": " + err);
  }
  png_init_io(png, file.get());
  png_read_png(png, info, PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA, nullptr);
  const std::size_t w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int type = png_get_color_type(png, info);
  const std::size_t channels = png_get_channels(png, info);
  png_bytepp rows = png_get_rows(png, info);
  const double maxv = quantize_max(depth);
  img = Image(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const png_bytep row = rows[y];
    for (std::size_t x = 0; x < w; ++x) {
      auto sample = [&](std::size_t c) -> double {
        const std::size_t i = x * channels + c;
        return depth == 16 ? static_cast<double>((row[2 * i] << 8) | row[2 * i + 1]) : static_cast<double>(row[i]);
      };
      double v;
      if (type & PNG_COLOR_MASK_COLOR) {
        v = kLumaWeights[0] * sample(0) + kLumaWeights[1] * sample(1) + kLumaWeights[2] * sample(2);
      } else {
        v = sample(0);
      }
      img.at(x, y) = v / maxv;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// Header tokens of a netpbm file, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  if (next_token(in) != "P5") throw ImageError(path.string() + ": only binary PGM (P5) is supported");
  std::size_t w, h;
  unsigned long maxv;
  try {
    w = std::stoul(next_token(in));
    h = std::stoul(next_token(in));
    maxv = std::stoul(next_token(in));
  } catch (const std::exception&) {
    throw ImageError(path.string() + ": malformed PGM header");
  }
  if (w == 0 || h == 0 || maxv == 0 || maxv > 65535) throw ImageError(path.string() + ": invalid PGM header values");
  const std::size_t bytes = maxv > 255 ? 2 : 1;
  std::vector<unsigned char> raw(w * h * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw ImageError(path.string() + ": truncated PGM data");
  Image img(w, h);
  for (std::size_t i = 0; i < w * h; ++i) {
    const unsigned v = bytes == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxv);
  }
  return img;
}

void write_png_rows(const std::filesystem::path& path, std::size_t w, std::size_t h, int depth, int color_type,
                    std::vector<png_byte>& data, std::size_t row_bytes) {
  auto file = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw ImageError("libpng: out of memory");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageError("cannot encode PNG " + path.string() + ": " + err);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = data.data() + y * row_bytes;
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
}

void require_nonempty(const Image& img) {
  if (img.empty() || img.pixels.size() != img.width * img.height) throw ImageError("cannot write an empty image");
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw ImageError("cannot open " + path.string());
  unsigned char sig[8] = {0};
  probe.read(reinterpret_cast<char*>(sig), 8);
  if (probe.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (probe.gcount() >= 2 && sig[0] == 'P' && sig[1] == '5') return read_pgm(path);
  throw ImageError(path.string() + ": unrecognized image format (expected PNG or binary PGM)");
}

void write_png(const std::filesystem::path& path, const Image& img, int bit_depth) {
  check_depth(bit_depth);
  require_nonempty(img);
  const std::size_t bpp = bit_depth == 16 ? 2 : 1;
  std::vector<png_byte> data(img.width * img.height * bpp);
  const double maxv = quantize_max(bit_depth);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const unsigned v = to_level(img.pixels[i], maxv);
    if (bpp == 2) {
      data[2 * i] = static_cast<png_byte>(v >> 8);
      data[2 * i + 1] = static_cast<png_byte>(v & 0xff);
    } else {
      data[i] = static_cast<png_byte>(v);
    }
  }
  write_png_rows(path, img.width, img.height, bit_depth, PNG_COLOR_TYPE_GRAY, data, img.width * bpp);
}

void write_pgm(const std::filesystem::path& path, const Image& img, int bit_depth) {
  check_depth(bit_depth);
  require_nonempty(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot open " + path.string() + " for writing");
  const double maxv = quantize_max(bit_depth);
  out << "P5\n" << img.width << " " << img.height << "\n" << static_cast<unsigned>(maxv) << "\n";
  std::vector<unsigned char> raw;
  raw.reserve(img.pixels.size() * 2);
  for (double p : img.pixels) {
    const unsigned v = to_level(p, maxv);
    if (bit_depth == 16) raw.push_back(static_cast<unsigned char>(v >> 8));
    raw.push_back(static_cast<unsigned char>(v & 0xff));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw ImageError("write failed for " + path.string());
}

void write_image(const std::filesystem::path& path, const Image& img, int bit_depth) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return write_png(path, img, bit_depth);
  if (ext == ".pgm") return write_pgm(path, img, bit_depth);
  throw ImageError(path.string() + ": unsupported extension, use .png or .pgm");
}

void write_png_rgb(const std::filesystem::path& path, const Image& r, const Image& g, const Image& b) {
  require_nonempty(r);
  if (g.width != r.width || g.height != r.height || b.width != r.width || b.height != r.height) {
    throw DimensionError("write_png_rgb: planes differ in size");
  }
  std::vector<png_byte> data(r.pixels.size() * 3);
  for (std::size_t i = 0; i < r.pixels.size(); ++i) {
    data[3 * i] = static_cast<png_byte>(to_level(r.pixels[i], 255));
    data[3 * i + 1] = static_cast<png_byte>(to_level(g.pixels[i], 255));
    data[3 * i + 2] = static_cast<png_byte>(to_level(b.pixels[i], 255));
  }
  write_png_rows(path, r.width, r.height, 8, PNG_COLOR_TYPE_RGB, data, r.width * 3);
}

RgbPlanes ghost_overlay(const Image& warped, const Image& target) {
  if (warped.width != target.width || warped.height != target.height) {
    throw DimensionError("ghost_overlay: images differ in size");
  }
  return {target, warped, warped};
}

}  // namespace cah
