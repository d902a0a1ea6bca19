#include "cah/models.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "cah/ops.hpp"

namespace cah {

std::string to_string(ModelVariant v) { return v == ModelVariant::paper ? "paper" : "tiny"; }

ModelVariant parse_model_variant(std::string_view s) {
  if (s == "paper") return ModelVariant::paper;
  if (s == "tiny") return ModelVariant::tiny;
  throw std::invalid_argument("unknown model variant '" + std::string(s) + "' (expected paper or tiny)");
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.variant = ModelVariant::paper;
  c.feature_channels = 1;
  c.feature_widths = {4, 8};
  c.mask_widths = {4, 8, 16, 32};
  c.stem_width = 64;
  c.stage_widths = {64, 128, 256, 512};
  c.estimator_blocks = {3, 4, 6, 3};
  c.input_height = 315;
  c.input_width = 560;
  return c;
}

ModelConfig ModelConfig::tiny() { return ModelConfig{}; }

void ModelConfig::validate() const {
  if (feature_channels == 0) throw std::invalid_argument("model: feature_channels must be positive");
  if (stage_widths.empty() || stage_widths.size() != estimator_blocks.size()) {
    throw std::invalid_argument("model: stage_widths and estimator_blocks must be non-empty and equally long");
  }
  for (auto b : estimator_blocks)
    if (b == 0) throw std::invalid_argument("model: every stage needs at least one residual block");
  for (auto w : stage_widths)
    if (w == 0) throw std::invalid_argument("model: stage widths must be positive");
  for (auto w : feature_widths)
    if (w == 0) throw std::invalid_argument("model: feature widths must be positive");
  for (auto w : mask_widths)
    if (w == 0) throw std::invalid_argument("model: mask widths must be positive");
  if (stem_width == 0) throw std::invalid_argument("model: stem width must be positive");
  if (batch_norm) throw std::invalid_argument("model: batch normalization is not supported");
  if (input_height < estimator_min_size() || input_width < estimator_min_size()) {
    throw std::invalid_argument("model: input size below estimator minimum " + std::to_string(estimator_min_size()));
  }
}

std::size_t ModelConfig::estimator_min_size() const {
  // stem stride 2, max-pool stride 2, then stride 2 at the entry of every stage but the first
  std::size_t s = 4;
  for (std::size_t i = 1; i < stage_widths.size(); ++i) s *= 2;
  return s;
}

std::size_t ModelConfig::estimator_main_convs() const {
  std::size_t n = 1;
  for (auto b : estimator_blocks) n += 2 * b;
  return n;
}

template <typename T>
void BasicModelParams<T>::add(std::string name, BasicTensor<T> t) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  entries_.emplace_back(std::move(name), std::move(t));
}

template <typename T>
const BasicTensor<T>& BasicModelParams<T>::get(std::string_view name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw std::out_of_range("no parameter named " + std::string(name));
}

template <typename T>
bool BasicModelParams<T>::contains(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

template <typename T>
std::size_t BasicModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

template <typename T>
BasicModelParams<T> BasicModelParams<T>::clone() const {
  BasicModelParams<T> out;
  for (const auto& [n, t] : entries_) {
    auto c = t.clone();
    c.set_requires_grad(true);
    out.entries_.emplace_back(n, std::move(c));
  }
  return out;
}

template <typename T>
void BasicModelParams<T>::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

namespace {

std::string block_prefix(std::size_t stage, std::size_t block) {
  return "h.stage" + std::to_string(stage) + ".block" + std::to_string(block);
}

bool block_has_projection(const ModelConfig& c, std::size_t stage, std::size_t block) {
  if (block != 0) return false;
  const std::size_t in_w = stage == 0 ? c.stem_width : c.stage_widths[stage - 1];
  return stage != 0 || in_w != c.stage_widths[stage];
}

template <typename T>
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  BasicTensor<T> conv(std::size_t out, std::size_t in, std::size_t k) {
    BasicTensor<T> w(Shape{out, in, k, k});
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in * k * k)));
    for (auto& v : w.mutable_data()) v = static_cast<T>(dist(rng_));
    w.set_requires_grad(true);
    return w;
  }

  static BasicTensor<T> zeros(Shape shape) {
    BasicTensor<T> t(std::move(shape));
    t.set_requires_grad(true);
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

template <typename T>
BasicTensor<T> conv_layer(BasicTape<T>& tape, const BasicModelParams<T>& p, const std::string& name,
                          const BasicTensor<T>& x, std::size_t stride, std::size_t padding) {
  return ops::conv2d(tape, x, p.get(name + ".weight"), p.get(name + ".bias"), stride, padding);
}

void check_patch(const Shape& s, const char* who) {
  if (s.size() != 4 || s[0] != 1 || s[1] != 1) {
    throw DimensionError(std::string(who) + ": expected a 1x1xHxW grayscale patch, got " + shape_str(s));
  }
}

}  // namespace

template <typename T>
BasicModel<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  BasicModel<T> m;
  m.config = config;
  Initializer<T> init(seed);
  auto& p = m.params;

  std::size_t in = 1;
  for (std::size_t i = 0; i <= config.feature_widths.size(); ++i) {
    const std::size_t out = i < config.feature_widths.size() ? config.feature_widths[i] : config.feature_channels;
    p.add("f.conv" + std::to_string(i) + ".weight", init.conv(out, in, 3));
    p.add("f.conv" + std::to_string(i) + ".bias", Initializer<T>::zeros({out}));
    in = out;
  }
  in = 1;
  for (std::size_t i = 0; i <= config.mask_widths.size(); ++i) {
    const std::size_t out = i < config.mask_widths.size() ? config.mask_widths[i] : 1;
    p.add("m.conv" + std::to_string(i) + ".weight", init.conv(out, in, 3));
    p.add("m.conv" + std::to_string(i) + ".bias", Initializer<T>::zeros({out}));
    in = out;
  }
  p.add("h.stem.weight", init.conv(config.stem_width, 2 * config.feature_channels, 7));
  p.add("h.stem.bias", Initializer<T>::zeros({config.stem_width}));
  in = config.stem_width;
  for (std::size_t s = 0; s < config.stage_widths.size(); ++s) {
    const std::size_t width = config.stage_widths[s];
    for (std::size_t b = 0; b < config.estimator_blocks[s]; ++b) {
      const std::string pre = block_prefix(s, b);
      p.add(pre + ".conv1.weight", init.conv(width, in, 3));
      p.add(pre + ".conv1.bias", Initializer<T>::zeros({width}));
      p.add(pre + ".conv2.weight", init.conv(width, width, 3));
      p.add(pre + ".conv2.bias", Initializer<T>::zeros({width}));
      if (block_has_projection(config, s, b)) {
        p.add(pre + ".proj.weight", init.conv(width, in, 1));
        p.add(pre + ".proj.bias", Initializer<T>::zeros({width}));
      }
      in = width;
    }
  }
  p.add("h.fc.weight", Initializer<T>::zeros({8, in}));
  p.add("h.fc.bias", Initializer<T>::zeros({8}));
  return m;
}

template <typename T>
BasicModel<T> cast_model(const BasicModel<double>& m) {
  BasicModel<T> out;
  out.config = m.config;
  for (const auto& [n, t] : m.params.entries()) {
    auto c = tensor_cast<T>(t);
    c.set_requires_grad(true);
    out.params.add(n, std::move(c));
  }
  return out;
}

template <typename T>
BasicTensor<T> extract_features(BasicTape<T>& tape, const BasicModel<T>& model, const BasicTensor<T>& patch) {
  check_patch(patch.shape(), "extract_features");
  const std::size_t layers = model.config.feature_widths.size() + 1;
  BasicTensor<T> x = patch;
  for (std::size_t i = 0; i < layers; ++i) {
    x = conv_layer(tape, model.params, "f.conv" + std::to_string(i), x, 1, 1);
    if (i + 1 < layers) x = ops::relu(tape, x);
  }
  if (model.config.normalize_features) x = ops::rms_normalize(tape, x, static_cast<T>(kFeatureNormEpsilon));
  return x;
}

template <typename T>
BasicTensor<T> predict_mask(BasicTape<T>& tape, const BasicModel<T>& model, const BasicTensor<T>& patch) {
  check_patch(patch.shape(), "predict_mask");
  const std::size_t layers = model.config.mask_widths.size() + 1;
  BasicTensor<T> x = patch;
  for (std::size_t i = 0; i < layers; ++i) {
    x = conv_layer(tape, model.params, "m.conv" + std::to_string(i), x, 1, 1);
    x = i + 1 < layers ? ops::relu(tape, x) : ops::sigmoid(tape, x);
  }
  return x;
}

template <typename T>
BasicTensor<T> estimate_offsets(BasicTape<T>& tape, const BasicModel<T>& model, const BasicTensor<T>& ga,
                                const BasicTensor<T>& gb) {
  const ModelConfig& c = model.config;
  if (ga.rank() != 4 || ga.shape() != gb.shape()) {
    throw DimensionError("estimate_offsets: feature maps must share an NCHW shape, got " + shape_str(ga.shape()) +
                         " and " + shape_str(gb.shape()));
  }
  if (ga.dim(1) != c.feature_channels) {
    throw DimensionError("estimate_offsets: expected " + std::to_string(c.feature_channels) +
                         " feature channels per branch, got " + std::to_string(ga.dim(1)));
  }
  const std::size_t min = c.estimator_min_size();
  if (ga.dim(2) < min || ga.dim(3) < min) {
    throw DimensionError("estimate_offsets: input " + std::to_string(ga.dim(2)) + "x" + std::to_string(ga.dim(3)) +
                         " is smaller than the stride pyramid minimum of " + std::to_string(min) + "x" +
                         std::to_string(min));
  }
  const auto& p = model.params;
  auto x = ops::concat_channels(tape, std::vector<BasicTensor<T>>{ga, gb});
  x = ops::relu(tape, conv_layer(tape, p, "h.stem", x, 2, 3));
  x = ops::max_pool2d(tape, x, 3, 2, 1);
  for (std::size_t s = 0; s < c.stage_widths.size(); ++s) {
    for (std::size_t b = 0; b < c.estimator_blocks[s]; ++b) {
      const std::string pre = block_prefix(s, b);
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      auto y = ops::relu(tape, conv_layer(tape, p, pre + ".conv1", x, stride, 1));
      y = conv_layer(tape, p, pre + ".conv2", y, 1, 1);
      auto shortcut = block_has_projection(c, s, b) ? conv_layer(tape, p, pre + ".proj", x, stride, 0) : x;
      x = ops::relu(tape, ops::add(tape, y, shortcut));
    }
  }
  auto pooled = ops::global_avg_pool(tape, x);
  return ops::linear(tape, pooled, p.get("h.fc.weight"), p.get("h.fc.bias"));
}

template <typename T>
BasicPipelineOutput<T> forward_pipeline(BasicTape<T>& tape, const BasicModel<T>& model, const BasicTensor<T>& ia,
                                        const BasicTensor<T>& ib, const ForwardOptions& options) {
  if (ia.shape() != ib.shape()) {
    throw DimensionError("forward_pipeline: patches differ in shape, " + shape_str(ia.shape()) + " vs " +
                         shape_str(ib.shape()));
  }
  check_patch(ia.shape(), "forward_pipeline");
  BasicPipelineOutput<T> out;
  if (options.identity_features) {
    if (model.config.feature_channels != 1) {
      throw DimensionError("identity features need feature_channels == 1");
    }
    out.fa = ia;
    out.fb = ib;
  } else {
    out.fa = extract_features(tape, model, ia);
    out.fb = extract_features(tape, model, ib);
  }
  out.ma = predict_mask(tape, model, ia);
  out.mb = predict_mask(tape, model, ib);
  BasicTensor<T> ga = out.fa, gb = out.fb;
  if (options.mask_attention) {
    ga = ops::mul(tape, out.fa, out.ma);
    gb = ops::mul(tape, out.fb, out.mb);
  }
  const Frame frame{ia.dim(3), ia.dim(2)};
  out.offsets_ab = estimate_offsets(tape, model, ga, gb);
  out.offsets_ba = estimate_offsets(tape, model, gb, ga);
  out.h_ab = offsets_to_homography(tape, out.offsets_ab, frame);
  out.h_ba = offsets_to_homography(tape, out.offsets_ba, frame);
  return out;
}

template <typename T>
Homography predict_homography(const BasicModel<T>& model, const BasicTensor<T>& ia, const BasicTensor<T>& ib,
                              const ForwardOptions& options) {
  BasicTape<T> tape;
  check_patch(ia.shape(), "predict_homography");
  if (ia.shape() != ib.shape()) {
    throw DimensionError("predict_homography: patches differ in shape, " + shape_str(ia.shape()) + " vs " +
                         shape_str(ib.shape()));
  }
  // Only the a->b direction is needed at inference.
  auto fa = options.identity_features ? ia : extract_features(tape, model, ia);
  auto fb = options.identity_features ? ib : extract_features(tape, model, ib);
  if (options.mask_attention) {
    fa = ops::mul(tape, fa, predict_mask(tape, model, ia));
    fb = ops::mul(tape, fb, predict_mask(tape, model, ib));
  }
  auto off = estimate_offsets(tape, model, fa, fb);
  std::array<double, 8> v{};
  for (std::size_t i = 0; i < 8; ++i) v[i] = static_cast<double>(off.data()[i]);
  return offsets_to_homography(CornerOffsets::from_values(v, Frame{ia.dim(3), ia.dim(2)}));
}

#define CAH_INSTANTIATE_MODELS(T)                                                                             \
  template class BasicModelParams<T>;                                                                         \
  template BasicModel<T> init_model<T>(const ModelConfig&, std::uint64_t);                                    \
  template BasicModel<T> cast_model<T>(const BasicModel<double>&);                                            \
  template BasicTensor<T> extract_features(BasicTape<T>&, const BasicModel<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> predict_mask(BasicTape<T>&, const BasicModel<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> estimate_offsets(BasicTape<T>&, const BasicModel<T>&, const BasicTensor<T>&,        \
                                           const BasicTensor<T>&);                                            \
  template BasicPipelineOutput<T> forward_pipeline(BasicTape<T>&, const BasicModel<T>&, const BasicTensor<T>&, \
                                                   const BasicTensor<T>&, const ForwardOptions&);             \
  template Homography predict_homography(const BasicModel<T>&, const BasicTensor<T>&, const BasicTensor<T>&,  \
                                         const ForwardOptions&);

CAH_INSTANTIATE_MODELS(float)
CAH_INSTANTIATE_MODELS(double)

}  // namespace cah
