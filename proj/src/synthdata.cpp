#include "cah/synthdata.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace cah {

std::string to_string(Category c) {
  switch (c) {
    case Category::RE: return "RE";
    case Category::LT: return "LT";
    case Category::LL: return "LL";
    case Category::SF: return "SF";
    case Category::LF: return "LF";
  }
  return "?";
}

Category parse_category(std::string_view s) {
  for (auto c : kCategories)
    if (to_string(c) == s) return c;
  throw std::invalid_argument("unknown category '" + std::string(s) + "' (expected RE, LT, LL, SF or LF)");
}

double GenConfig::max_perturbation() const {
  return perturbation_px >= 0 ? perturbation_px : 0.08 * static_cast<double>(std::min(width, height));
}

void GenConfig::validate() const {
  auto check_range = [](const Range& r, const char* name) {
    if (!(r.lo >= 0 && r.hi >= r.lo)) throw std::invalid_argument(std::string("generate: bad range for ") + name);
  };
  if (width < 8 || height < 8) throw std::invalid_argument("generate: patch must be at least 8x8");
  if (!(max_perturbation() >= 0) || !std::isfinite(max_perturbation()))
    throw std::invalid_argument("generate: perturbation must be non-negative");
  if (texture_octaves < 1) throw std::invalid_argument("generate: texture_octaves must be positive");
  if (primitives < 0) throw std::invalid_argument("generate: primitives must be non-negative");
  if (low_texture_contrast < 0 || low_light_scale <= 0 || low_light_noise < 0 || noise < 0 || illumination_gain < 0 ||
      illumination_gain >= 1) {
    throw std::invalid_argument("generate: photometric parameters out of range");
  }
  check_range(low_light_gain, "low_light_gain");
  if (low_light_offset.hi < low_light_offset.lo) throw std::invalid_argument("generate: bad range for low_light_offset");
  check_range(small_foreground, "small_foreground");
  check_range(large_foreground, "large_foreground");
  if (large_foreground.hi >= 1) throw std::invalid_argument("generate: foreground must cover less than the patch");
  if (!(small_foreground.hi < large_foreground.lo))
    throw std::invalid_argument("generate: small-foreground fractions must stay below large-foreground fractions");
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Smooth value noise: random lattice, smoothstep interpolation.
void add_value_noise(Image& img, std::mt19937_64& rng, double cell, double amplitude) {
  const std::size_t gw = static_cast<std::size_t>(std::ceil(static_cast<double>(img.width) / cell)) + 2;
  const std::size_t gh = static_cast<std::size_t>(std::ceil(static_cast<double>(img.height) / cell)) + 2;
  std::vector<double> lattice(gw * gh);
  for (auto& v : lattice) v = uniform(rng, -1, 1);
  auto s = [](double t) { return t * t * (3 - 2 * t); };
  for (std::size_t y = 0; y < img.height; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const auto y0 = static_cast<std::size_t>(fy);
    const double ty = s(fy - static_cast<double>(y0));
    for (std::size_t x = 0; x < img.width; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const auto x0 = static_cast<std::size_t>(fx);
      const double tx = s(fx - static_cast<double>(x0));
      const double a = lattice[y0 * gw + x0], b = lattice[y0 * gw + x0 + 1];
      const double c = lattice[(y0 + 1) * gw + x0], d = lattice[(y0 + 1) * gw + x0 + 1];
      img.at(x, y) += amplitude * ((a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty);
    }
  }
}

void normalize_to(Image& img, double lo, double hi) {
  const auto [mn, mx] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const double a = *mn, span = std::max(*mx - *mn, 1e-12);
  for (auto& p : img.pixels) p = lo + (hi - lo) * (p - a) / span;
}

void draw_primitives(Image& img, std::mt19937_64& rng, int count, double scale) {
  for (int k = 0; k < count; ++k) {
    const double cx = uniform(rng, 0, static_cast<double>(img.width));
    const double cy = uniform(rng, 0, static_cast<double>(img.height));
    const double r = uniform(rng, 0.04, 0.18) * scale;
    const double level = uniform(rng, 0.0, 1.0);
    const double alpha = uniform(rng, 0.4, 0.9);
    const bool disc = uniform(rng, 0, 1) < 0.5;
    const double ax = r * uniform(rng, 0.5, 1.5), ay = r * uniform(rng, 0.5, 1.5);
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        const double dx = (static_cast<double>(x) - cx) / ax, dy = (static_cast<double>(y) - cy) / ay;
        const bool inside = disc ? dx * dx + dy * dy <= 1 : std::abs(dx) <= 1 && std::abs(dy) <= 1;
        if (inside) img.at(x, y) = (1 - alpha) * img.at(x, y) + alpha * level;
      }
  }
}

Image base_texture(const GenConfig& cfg, Category cat, std::size_t w, std::size_t h, std::mt19937_64& rng) {
  Image img(w, h);
  const double scale = static_cast<double>(std::min(cfg.width, cfg.height));
  if (cat == Category::LT) {
    add_value_noise(img, rng, scale * 0.75, 1.0);
    normalize_to(img, 0.5 - cfg.low_texture_contrast / 2, 0.5 + cfg.low_texture_contrast / 2);
    return img;
  }
  double cell = scale / 4, amp = 1.0;
  for (int o = 0; o < cfg.texture_octaves; ++o, cell /= 2, amp /= 2) add_value_noise(img, rng, std::max(cell, 1.5), amp);
  normalize_to(img, 0.0, 1.0);
  draw_primitives(img, rng, cfg.primitives, scale);
  normalize_to(img, 0.05, 0.95);
  if (cat == Category::LL)
    for (auto& p : img.pixels) p *= cfg.low_light_scale;
  return img;
}

double bilinear(const Image& img, double x, double y) {
  if (!(x >= 0 && y >= 0 && x <= static_cast<double>(img.width - 1) && y <= static_cast<double>(img.height - 1)))
    return 0.0;
  const auto x0 = std::min(static_cast<std::size_t>(x), img.width - 2);
  const auto y0 = std::min(static_cast<std::size_t>(y), img.height - 2);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  return (1 - fy) * ((1 - fx) * img.at(x0, y0) + fx * img.at(x0 + 1, y0)) +
         fy * ((1 - fx) * img.at(x0, y0 + 1) + fx * img.at(x0 + 1, y0 + 1));
}

// Axis-aligned foreground with its own oriented stripe texture.
struct Foreground {
  double x0, y0, w, h;
  double angle, period, lo, hi;

  bool contains(double x, double y) const { return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h; }
  double shade(double x, double y) const {
    const double u = (x - x0) * std::cos(angle) + (y - y0) * std::sin(angle);
    const double v = -(x - x0) * std::sin(angle) + (y - y0) * std::cos(angle);
    const bool stripe = std::fmod(std::floor(u / (period / 2)) + std::floor(v / (period * 2)) + 1e6, 2.0) < 1.0;
    return stripe ? hi : lo;
  }
};

Foreground draw_foreground(const GenConfig& cfg, const Range& fraction, std::mt19937_64& rng) {
  const double W = static_cast<double>(cfg.width), H = static_cast<double>(cfg.height);
  const double area = uniform(rng, fraction.lo, std::max(fraction.hi, fraction.lo + 1e-12)) * W * H;
  const double aspect = std::exp(uniform(rng, std::log(0.6), std::log(1.6)));
  Foreground f{};
  f.w = std::min(std::sqrt(area * aspect), W - 2);
  f.h = std::min(area / f.w, H - 2);
  f.x0 = uniform(rng, 0, W - f.w);
  f.y0 = uniform(rng, 0, H - f.h);
  f.angle = uniform(rng, 0, std::numbers::pi);
  f.period = uniform(rng, 3.0, 5.0);
  f.lo = uniform(rng, 0.0, 0.2);
  f.hi = uniform(rng, 0.8, 1.0);
  return f;
}

Image rasterize(const Foreground& f, std::size_t w, std::size_t h) {
  Image m(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) m.at(x, y) = f.contains(static_cast<double>(x), static_cast<double>(y)) ? 1 : 0;
  return m;
}

bool near_region(const Image& region, double x, double y, double radius) {
  const long r = static_cast<long>(std::ceil(radius));
  const long cx = std::lround(x), cy = std::lround(y);
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx) {
      const long px = cx + dx, py = cy + dy;
      if (px < 0 || py < 0 || px >= static_cast<long>(region.width) || py >= static_cast<long>(region.height)) continue;
      if (region.at(static_cast<std::size_t>(px), static_cast<std::size_t>(py)) > 0) return true;
    }
  return false;
}

void clip01(Image& img) {
  for (auto& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
}

void add_noise(Image& img, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0) return;
  std::normal_distribution<double> n(0, sigma);
  for (auto& p : img.pixels) p += n(rng);
}

}  // namespace

PairSample generate_pair(const GenConfig& cfg, Category category, std::uint64_t index) {
  cfg.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(category)};
  std::mt19937_64 rng(seq);

  PairSample s;
  s.category = category;
  s.index = index;
  const Frame frame{cfg.width, cfg.height};
  const double p = cfg.max_perturbation();

  std::array<double, 8> off{};
  if (p > 0) {
    if (cfg.motion == Motion::translation) {
      const double tx = uniform(rng, -p, p), ty = uniform(rng, -p, p);
      for (int i = 0; i < 4; ++i) {
        off[2 * i] = tx;
        off[2 * i + 1] = ty;
      }
    } else {
      for (auto& v : off) v = uniform(rng, -p, p);
    }
  }
  s.gt_homography = cfg.motion == Motion::translation ? Homography::translation(off[0], off[1])
                                                      : offsets_to_homography(CornerOffsets::from_values(off, frame));

  // Canvas with a margin so patch_b never samples outside rendered content.
  const auto margin = static_cast<std::size_t>(std::ceil(3 * p)) + 2;
  const Image canvas = base_texture(cfg, category, cfg.width + 2 * margin, cfg.height + 2 * margin, rng);
  s.patch_a = canvas.crop(margin, margin, cfg.width, cfg.height);
  s.patch_b = Image(cfg.width, cfg.height);
  const Eigen::Matrix3d inv = inverse(s.gt_homography).matrix();
  const double m = static_cast<double>(margin);
  for (std::size_t y = 0; y < cfg.height; ++y)
    for (std::size_t x = 0; x < cfg.width; ++x) {
      const Eigen::Vector3d q = inv * Eigen::Vector3d(static_cast<double>(x), static_cast<double>(y), 1.0);
      s.patch_b.at(x, y) = bilinear(canvas, q.x() / q.z() + m, q.y() / q.z() + m);
    }

  if (category == Category::SF || category == Category::LF) {
    const auto fa = draw_foreground(cfg, category == Category::SF ? cfg.small_foreground : cfg.large_foreground, rng);
    auto fb = fa;
    fb.x0 += uniform(rng, -std::max(p, 1.0), std::max(p, 1.0));
    fb.y0 += uniform(rng, -std::max(p, 1.0), std::max(p, 1.0));
    for (std::size_t y = 0; y < cfg.height; ++y)
      for (std::size_t x = 0; x < cfg.width; ++x) {
        const double fx = static_cast<double>(x), fy = static_cast<double>(y);
        if (fa.contains(fx, fy)) s.patch_a.at(x, y) = fa.shade(fx, fy);
        // the foreground carries its texture along with it
        if (fb.contains(fx, fy)) s.patch_b.at(x, y) = fa.shade(fx - fb.x0 + fa.x0, fy - fb.y0 + fa.y0);
      }
    s.dynamic_region = rasterize(fa, cfg.width, cfg.height);
    s.dynamic_region_b = rasterize(fb, cfg.width, cfg.height);
  }

  if (category == Category::LL) {
    const double gain = uniform(rng, cfg.low_light_gain.lo, cfg.low_light_gain.hi);
    const double bias = uniform(rng, cfg.low_light_offset.lo, cfg.low_light_offset.hi);
    for (auto& v : s.patch_b.pixels) v = gain * v + bias;
    add_noise(s.patch_a, cfg.low_light_noise, rng);
    add_noise(s.patch_b, cfg.low_light_noise, rng);
    s.photometric = true;
  }
  if (cfg.illumination_gain > 0) {
    const double gain = 1 + uniform(rng, -cfg.illumination_gain, cfg.illumination_gain);
    for (auto& v : s.patch_b.pixels) v *= gain;
    s.photometric = true;
  }
  if (cfg.noise > 0) {
    add_noise(s.patch_a, cfg.noise, rng);
    add_noise(s.patch_b, cfg.noise, rng);
    s.photometric = true;
  }
  clip01(s.patch_a);
  clip01(s.patch_b);

  // Labeled points: one per cell of a 3x3 grid, kept off the moving content.
  const double W = static_cast<double>(cfg.width), H = static_cast<double>(cfg.height);
  const double mx = 0.1 * W, my = 0.1 * H;
  for (int cy = 0; cy < 3; ++cy)
    for (int cx = 0; cx < 3; ++cx)
      for (int attempt = 0; attempt < 30; ++attempt) {
        const Point2 a{uniform(rng, mx + cx * (W - 2 * mx) / 3, mx + (cx + 1) * (W - 2 * mx) / 3),
                       uniform(rng, my + cy * (H - 2 * my) / 3, my + (cy + 1) * (H - 2 * my) / 3)};
        const Point2 b = s.gt_homography.apply(a);
        if (!(b.x >= 1 && b.y >= 1 && b.x <= W - 2 && b.y <= H - 2)) continue;
        if (s.dynamic_region && (near_region(*s.dynamic_region, a.x, a.y, 2) ||
                                 near_region(*s.dynamic_region_b, b.x, b.y, 2))) {
          continue;
        }
        s.gt_points.push_back({a, b});
        break;
      }
  while (s.gt_points.size() > 8) {
    const auto drop = std::uniform_int_distribution<std::size_t>(0, s.gt_points.size() - 1)(rng);
    s.gt_points.erase(s.gt_points.begin() + static_cast<long>(drop));
  }
  return s;
}

Image static_mask_b(const PairSample& s) {
  const std::size_t w = s.patch_b.width, h = s.patch_b.height;
  Image mask(w, h);
  const Eigen::Matrix3d inv = inverse(s.gt_homography).matrix();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (s.dynamic_region_b && s.dynamic_region_b->at(x, y) > 0) continue;
      const Eigen::Vector3d q = inv * Eigen::Vector3d(static_cast<double>(x), static_cast<double>(y), 1.0);
      const double sx = q.x() / q.z(), sy = q.y() / q.z();
      if (!(sx >= 0 && sy >= 0 && sx <= static_cast<double>(w - 1) && sy <= static_cast<double>(h - 1))) continue;
      if (s.dynamic_region && near_region(*s.dynamic_region, sx, sy, 1.5)) continue;
      mask.at(x, y) = 1;
    }
  return mask;
}

double gradient_energy(const Image& img) {
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t y = 0; y + 1 < img.height; ++y)
    for (std::size_t x = 0; x + 1 < img.width; ++x) {
      const double dx = img.at(x + 1, y) - img.at(x, y), dy = img.at(x, y + 1) - img.at(x, y);
      acc += dx * dx + dy * dy;
      ++n;
    }
  return n ? acc / static_cast<double>(n) : 0.0;
}

CropPair random_crop_pair(const Image& a, const Image& b, std::size_t crop_w, std::size_t crop_h,
                          std::mt19937_64& rng) {
  if (a.width != b.width || a.height != b.height) throw DimensionError("random_crop_pair: images differ in size");
  if (crop_w == 0 || crop_h == 0 || crop_w > a.width || crop_h > a.height) {
    throw DimensionError("random_crop_pair: crop " + std::to_string(crop_w) + "x" + std::to_string(crop_h) +
                         " does not fit image " + std::to_string(a.width) + "x" + std::to_string(a.height));
  }
  CropPair c;
  c.x0 = std::uniform_int_distribution<std::size_t>(0, a.width - crop_w)(rng);
  c.y0 = std::uniform_int_distribution<std::size_t>(0, a.height - crop_h)(rng);
  c.a = a.crop(c.x0, c.y0, crop_w, crop_h);
  c.b = b.crop(c.x0, c.y0, crop_w, crop_h);
  return c;
}

namespace {

std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool parse_double(const std::string& tok, double& out) {
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

void write_annotation(std::ostream& out, const Annotation& ann) {
  for (const auto* p : {&ann.path_a, &ann.path_b}) {
    if (p->empty() || std::any_of(p->begin(), p->end(), [](unsigned char c) { return std::isspace(c); }))
      throw std::invalid_argument("annotation paths must be non-empty and free of whitespace: '" + *p + "'");
  }
  out << ann.path_a << ' ' << ann.path_b << ' ' << to_string(ann.category) << '\n';
  for (const auto& c : ann.points)
    out << fmt_coord(c.a.x) << ' ' << fmt_coord(c.a.y) << ' ' << fmt_coord(c.b.x) << ' ' << fmt_coord(c.b.y) << '\n';
}

void write_annotation(const std::filesystem::path& path, const Annotation& ann) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_annotation(out, ann);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Annotation read_annotation(std::istream& in, const std::string& source) {
  Annotation ann;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(source + ": line " + std::to_string(lineno) + ": " + what);
  };
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(t);
    if (!header) {
      if (tok.size() != 3) fail("expected header 'path_a path_b CATEGORY'");
      ann.path_a = tok[0];
      ann.path_b = tok[1];
      try {
        ann.category = parse_category(tok[2]);
      } catch (const std::invalid_argument& e) {
        fail(e.what());
      }
      header = true;
      continue;
    }
    if (tok.empty()) continue;
    if (tok.size() != 4) fail("expected 'x_a y_a x_b y_b', got " + std::to_string(tok.size()) + " fields");
    double v[4];
    for (int i = 0; i < 4; ++i)
      if (!parse_double(tok[i], v[i])) fail("invalid coordinate '" + tok[i] + "'");
    ann.points.push_back({{v[0], v[1]}, {v[2], v[3]}});
  }
  if (!header) throw ParseError(source + ": line 1: missing header");
  return ann;
}

Annotation read_annotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotation " + path.string());
  return read_annotation(in, path.string());
}

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::vector<std::filesystem::path> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    std::filesystem::path p = line.substr(b, e - b + 1);
    out.push_back(p.is_relative() ? path.parent_path() / p : p);
  }
  return out;
}

CorrespondenceSet synthetic_correspondences(const Homography& h, Frame frame, std::size_t count,
                                            double outlier_fraction, double noise_sigma, std::mt19937_64& rng) {
  if (outlier_fraction < 0 || outlier_fraction > 1) throw std::invalid_argument("outlier fraction must be in [0, 1]");
  const double W = static_cast<double>(frame.width - 1), H = static_cast<double>(frame.height - 1);
  CorrespondenceSet set;
  const auto outliers = static_cast<std::size_t>(std::lround(outlier_fraction * static_cast<double>(count)));
  set.inlier.assign(count, true);
  for (std::size_t i = 0; i < outliers; ++i) set.inlier[i] = false;
  std::shuffle(set.inlier.begin(), set.inlier.end(), rng);
  std::normal_distribution<double> n(0, noise_sigma > 0 ? noise_sigma : 1);
  for (std::size_t i = 0; i < count; ++i) {
    const Point2 s{uniform(rng, 0, W), uniform(rng, 0, H)};
    Point2 d;
    if (set.inlier[i]) {
      d = h.apply(s);
      if (noise_sigma > 0) {
        d.x += n(rng);
        d.y += n(rng);
      }
    } else {
      d = {uniform(rng, 0, W), uniform(rng, 0, H)};
    }
    set.src.push_back(s);
    set.dst.push_back(d);
  }
  return set;
}

}  // namespace cah
