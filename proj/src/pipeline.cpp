#include "cah/pipeline.hpp"

#include <omp.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <numeric>

#include "cah/checkpoint.hpp"
#include "cah/ops.hpp"

namespace cah {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_mask: return "no_mask";
    case Ablation::mask_attention_only: return "mask_attention_only";
    case Ablation::mask_ransac_only: return "mask_ransac_only";
    case Ablation::no_triplet_term: return "no_triplet_term";
    case Ablation::no_feature_extractor: return "no_feature_extractor";
    case Ablation::from_scratch: return "from_scratch";
  }
  return "?";
}

Ablation parse_ablation(std::string_view s) {
  for (auto a : kAblationArms)
    if (to_string(a) == s) return a;
  throw ConfigError("unknown ablation '" + std::string(s) +
                    "' (expected full, no_mask, mask_attention_only, mask_ransac_only, no_triplet_term, "
                    "no_feature_extractor or from_scratch)");
}

// ---------------------------------------------------------------------------
// Configuration

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.iterations = 120000;
  c.batch_size = 64;
  c.learning_rate = 1e-4;
  c.decay_interval = 12000;
  return c;
}

TrainConfig TrainConfig::tiny() { return TrainConfig{}; }

void TrainConfig::validate() const {
  if (iterations == 0) throw ConfigError("train: iterations must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (!(stage1_fraction >= 0 && stage1_fraction <= 1)) throw ConfigError("train: stage1_fraction must be in [0, 1]");
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    throw ConfigError("train: Adam betas must be in [0, 1)");
  if (!(adam_epsilon > 0)) throw ConfigError("train: adam_epsilon must be positive");
  if (!(lr_decay_factor > 0 && lr_decay_factor <= 1)) throw ConfigError("train: lr_decay_factor must be in (0, 1]");
  if (decay_interval == 0) throw ConfigError("train: decay_interval must be positive");
  if (!(lambda >= 0) || !(mu >= 0)) throw ConfigError("train: lambda and mu must be non-negative");
  if (!(loss_epsilon > 0)) throw ConfigError("train: loss_epsilon must be positive");
  if (!(mask_floor >= 0 && mask_floor < 1)) throw ConfigError("train: mask_floor must be in [0, 1)");
  if (threads < 0) throw ConfigError("train: threads must be non-negative");
}

std::size_t TrainConfig::stage1_iterations() const {
  if (ablation == Ablation::from_scratch) return 0;
  return static_cast<std::size_t>(std::floor(stage1_fraction * static_cast<double>(iterations)));
}

double TrainConfig::lr_at(std::size_t step) const {
  return learning_rate * std::pow(lr_decay_factor, static_cast<double>(step / decay_interval));
}

ForwardOptions inference_options(Ablation a) {
  ForwardOptions f;
  f.mask_attention = !(a == Ablation::no_mask || a == Ablation::mask_ransac_only);
  f.identity_features = a == Ablation::no_feature_extractor;
  return f;
}

ArmSettings arm_settings(const TrainConfig& cfg, bool stage_two) {
  ArmSettings s;
  s.objective.lambda = cfg.lambda;
  s.objective.mu = cfg.mu;
  s.objective.epsilon = cfg.loss_epsilon;
  s.objective.mask_floor = cfg.mask_floor;
  s.objective.detach_denominator = cfg.detach_denominator;
  s.objective.triplet_term = cfg.ablation != Ablation::no_triplet_term;
  s.objective.uniform_loss_masks = cfg.ablation == Ablation::no_mask || cfg.ablation == Ablation::mask_attention_only;
  s.forward = inference_options(cfg.ablation);
  // stage 1 keeps G = F; the loss masks stay active
  if (!stage_two) s.forward.mask_attention = false;
  return s;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
void Adam<T>::step(const std::vector<std::span<T>>& params, const std::vector<std::span<const T>>& grads, double lr) {
  if (params.size() != grads.size()) throw DimensionError("adam: parameter and gradient lists differ in length");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw DimensionError("adam: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || params[i].size() != m_[i].size()) {
      throw DimensionError("adam: buffer " + std::to_string(i) + " has " + std::to_string(params[i].size()) +
                           " values, gradient " + std::to_string(grads[i].size()) + ", state " +
                           std::to_string(m_[i].size()));
    }
  }
  ++t_;
  const double b1 = hyper_.beta1, b2 = hyper_.beta2;
  const double c1 = 1 - std::pow(b1, static_cast<double>(t_)), c2 = 1 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double g = static_cast<double>(grads[i][j]);
      m[j] = b1 * m[j] + (1 - b1) * g;
      v[j] = b2 * v[j] + (1 - b2) * g * g;
      const double update = lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + hyper_.epsilon);
      params[i][j] = static_cast<T>(static_cast<double>(params[i][j]) - update);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

// ---------------------------------------------------------------------------
// Training

PairSource synthetic_source(const GenConfig& gen, std::vector<Category> categories) {
  if (categories.empty()) throw ConfigError("synthetic source needs at least one category");
  gen.validate();
  return [gen, categories](std::uint64_t index) {
    auto s = generate_pair(gen, categories[index % categories.size()], index);
    return std::make_pair(std::move(s.patch_a), std::move(s.patch_b));
  };
}

std::string train_log_header() { return loss_csv_header() + ",lr,stage,features"; }

namespace {

Model to_double(const ModelF& m) {
  Model out;
  out.config = m.config;
  for (const auto& [name, t] : m.params.entries()) out.params.add(name, tensor_cast<double>(t));
  return out;
}

struct SampleResult {
  std::vector<float> grad;
  std::array<double, 5> parts{};
  std::string error;
};

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::map<std::string, std::string> run_metadata(const TrainConfig& cfg, std::size_t step) {
  char lr[32];
  std::snprintf(lr, sizeof lr, "%.17g", cfg.learning_rate);
  return {{"train.arm", to_string(cfg.ablation)},
          {"train.seed", std::to_string(cfg.seed)},
          {"train.step", std::to_string(step)},
          {"train.iterations", std::to_string(cfg.iterations)},
          {"train.batch_size", std::to_string(cfg.batch_size)},
          {"train.learning_rate", lr}};
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg, const PairSource& data,
                  const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  model_cfg.validate();
  if (cfg.ablation == Ablation::no_feature_extractor && model_cfg.feature_channels != 1) {
    throw ConfigError("train: no_feature_extractor needs feature_channels == 1 (features are the raw intensities)");
  }
  if (out_dir) std::filesystem::create_directories(*out_dir);

  ModelF model = cast_model<float>(init_model<double>(model_cfg, cfg.seed));
  auto& entries = model.params.entries();
  std::vector<std::size_t> offsets{0};
  for (const auto& e : entries) offsets.push_back(offsets.back() + e.second.numel());
  const std::size_t total_params = offsets.back();

  Adam<float> adam({cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon});
  std::vector<std::span<float>> param_spans;
  for (auto& e : entries) param_spans.push_back(e.second.mutable_data());
  std::vector<float> grad(total_params);
  std::vector<std::span<const float>> grad_spans;
  for (std::size_t i = 0; i < entries.size(); ++i)
    grad_spans.emplace_back(grad.data() + offsets[i], offsets[i + 1] - offsets[i]);

  const int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
  const std::size_t stage1 = cfg.stage1_iterations();
  TrainResult result;
  result.inference = inference_options(cfg.ablation);
  result.log.push_back(train_log_header());
  const char* features = result.inference.identity_features ? "identity" : "learned";

  std::vector<SampleResult> samples(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.iterations; ++step) {
    const bool stage_two = step >= stage1;
    const ArmSettings arm = arm_settings(cfg, stage_two);
    const long batch = static_cast<long>(cfg.batch_size);

#pragma omp parallel for num_threads(threads) schedule(static)
    for (long k = 0; k < batch; ++k) {
      auto& r = samples[static_cast<std::size_t>(k)];
      r.error.clear();
      try {
        const auto [ia, ib] = data(static_cast<std::uint64_t>(step) * cfg.batch_size + static_cast<std::uint64_t>(k));
        const auto a = to_tensor<float>(ia), b = to_tensor<float>(ib);
        ModelF local{model.config, model.params.clone()};
        TapeF tape;
        const auto out = forward_pipeline(tape, local, a, b, arm.forward);
        const auto loss = total_loss(tape, local, out, a, b, arm.objective, arm.forward);
        r.parts = {loss.ln_ab.item(), loss.ln_ba.item(), loss.feature_distance.item(), loss.inverse_penalty.item(),
                   loss.total.item()};
        if (std::isfinite(r.parts[4])) tape.backward(loss.total);
        r.grad.assign(total_params, 0.0f);
        const auto& le = local.params.entries();
        for (std::size_t i = 0; i < le.size(); ++i)
          if (le[i].second.has_grad())
            std::copy(le[i].second.grad().begin(), le[i].second.grad().end(), r.grad.begin() + static_cast<long>(offsets[i]));
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }

    // Reduce in sample order so the result does not depend on the thread count.
    std::array<double, 5> mean{};
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      const auto& r = samples[k];
      if (!r.error.empty()) throw TrainingError("step " + std::to_string(step) + ", sample " + std::to_string(k) + ": " + r.error);
      if (!std::isfinite(r.parts[4])) {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "non-finite loss at step %zu (sample %zu): ln_ab=%g ln_ba=%g feature_distance=%g "
                      "inverse_penalty=%g total=%g",
                      step, k, r.parts[0], r.parts[1], r.parts[2], r.parts[3], r.parts[4]);
        throw TrainingError(buf);
      }
      for (int j = 0; j < 5; ++j) mean[j] += r.parts[j];
    }
    const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
    for (std::size_t i = 0; i < total_params; ++i) {
      double acc = 0;
      for (std::size_t k = 0; k < cfg.batch_size; ++k) acc += static_cast<double>(samples[k].grad[i]);
      grad[i] = static_cast<float>(acc * inv_b);
    }
    for (auto& m : mean) m *= inv_b;

    const double lr = cfg.lr_at(step);
    adam.step(param_spans, grad_spans, lr);

    char row[320];
    std::snprintf(row, sizeof row, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%s", step, mean[0], mean[1], mean[2], mean[3],
                  mean[4], lr, stage_two ? 2 : 1, features);
    result.log.emplace_back(row);

    if (out_dir && cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0 &&
        step + 1 < cfg.iterations) {
      save_model(*out_dir / ("checkpoint_" + std::to_string(step + 1) + ".ckpt"), to_double(model), result.inference,
                 run_metadata(cfg, step + 1));
    }
  }

  result.model = to_double(model);
  if (out_dir) {
    write_lines(*out_dir / "train_log.csv", result.log);
    save_model(*out_dir / "model.ckpt", result.model, result.inference, run_metadata(cfg, cfg.iterations));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalPair eval_pair_from(const PairSample& s) {
  EvalPair p;
  p.a = s.patch_a;
  p.b = s.patch_b;
  p.category = s.category;
  p.points = s.gt_points;
  p.gt = s.gt_homography;
  return p;
}

std::vector<EvalPair> synthetic_eval_set(const GenConfig& gen, const std::vector<Category>& categories,
                                         std::size_t per_category, std::uint64_t first_index) {
  std::vector<EvalPair> pairs;
  const auto n = static_cast<std::uint64_t>(categories.size());
  for (std::uint64_t c = 0; c < n; ++c)
    for (std::uint64_t k = 0; k < per_category; ++k)
      pairs.push_back(eval_pair_from(generate_pair(gen, categories[c], first_index + k * n + c)));
  return pairs;
}

EvalPair load_eval_pair(const std::filesystem::path& annotation) {
  const auto ann = read_annotation(annotation);
  const auto dir = annotation.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_relative() ? dir / q : q;
  };
  EvalPair pair;
  pair.a = read_image(resolve(ann.path_a));
  pair.b = read_image(resolve(ann.path_b));
  if (pair.a.width != pair.b.width || pair.a.height != pair.b.height) {
    throw DimensionError(annotation.string() + ": images differ in size");
  }
  pair.category = ann.category;
  pair.points = ann.points;
  return pair;
}

Estimator identity_estimator() {
  return [](const EvalPair&) -> std::optional<Homography> { return Homography::identity(); };
}

Estimator gt_estimator() {
  return [](const EvalPair& p) -> std::optional<Homography> { return p.gt; };
}

Homography estimate_on_images(const Model& model, const ForwardOptions& options, const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw DimensionError("estimate: images differ in size");
  const std::size_t w = model.config.input_width, h = model.config.input_height;
  if (a.width <= w && a.height <= h) return predict_homography(model, to_tensor(a), to_tensor(b), options);
  const std::size_t cw = std::min(w, a.width), ch = std::min(h, a.height);
  const std::size_t x0 = (a.width - cw) / 2, y0 = (a.height - ch) / 2;
  const Homography hc = predict_homography(model, to_tensor(a.crop(x0, y0, cw, ch)), to_tensor(b.crop(x0, y0, cw, ch)),
                                           options);
  const auto t = Homography::translation(static_cast<double>(x0), static_cast<double>(y0));
  return compose(t, compose(hc, inverse(t)));
}

Estimator model_estimator(const Model& model, ForwardOptions options) {
  return [model, options](const EvalPair& p) -> std::optional<Homography> {
    return estimate_on_images(model, options, p.a, p.b);
  };
}

EvalReport evaluate(const std::string& method, const Estimator& estimator, const std::vector<EvalPair>& pairs,
                    double threshold) {
  if (!(threshold > 0)) throw ConfigError("evaluate: threshold must be positive");
  EvalReport rep;
  rep.method = method;
  rep.threshold = threshold;
  rep.pairs_hash = hash_pairs(pairs);
  rep.records.resize(pairs.size());
  const long n = static_cast<long>(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    auto& r = rep.records[static_cast<std::size_t>(i)];
    r.pair = static_cast<std::size_t>(i);
    r.category = p.category;
    r.method = method;
    try {
      const auto h = estimator(p);
      if (!h || p.points.empty()) {
        r.failed = true;
        continue;
      }
      double sum = 0;
      for (const auto& c : p.points) {
        const Point2 q = h->apply(c.a);
        const double e = std::hypot(q.x - c.b.x, q.y - c.b.y);
        if (!std::isfinite(e)) throw GeometryError("non-finite transfer");
        r.point_errors.push_back(e);
        r.inliers.push_back(e <= threshold);
        sum += e;
      }
      r.mean_error = sum / static_cast<double>(p.points.size());
    } catch (const std::exception&) {
      r.failed = true;
      r.point_errors.clear();
      r.inliers.clear();
      r.mean_error = 0;
    }
  }

  std::map<Category, std::pair<std::size_t, std::size_t>> point_counts;  // inliers, points
  double overall = 0;
  std::size_t ok = 0;
  for (const auto& r : rep.records) {
    auto& st = rep.categories[r.category];
    ++st.pairs;
    if (r.failed) {
      ++st.failures;
      ++rep.failures;
      continue;
    }
    st.mean_error += r.mean_error;
    overall += r.mean_error;
    ++ok;
    auto& pc = point_counts[r.category];
    pc.first += static_cast<std::size_t>(std::count(r.inliers.begin(), r.inliers.end(), true));
    pc.second += r.inliers.size();
  }
  std::size_t scored = 0;
  for (auto& [cat, st] : rep.categories) {
    const std::size_t good = st.pairs - st.failures;
    if (good == 0) {
      st.mean_error = std::nan("");
      st.inlier_percent = std::nan("");
      continue;
    }
    st.mean_error /= static_cast<double>(good);
    const auto& pc = point_counts[cat];
    st.inlier_percent = 100.0 * static_cast<double>(pc.first) / static_cast<double>(pc.second);
    rep.avg_error += st.mean_error;
    rep.avg_inlier_percent += st.inlier_percent;
    ++scored;
  }
  rep.avg_error = scored ? rep.avg_error / static_cast<double>(scored) : std::nan("");
  rep.avg_inlier_percent = scored ? rep.avg_inlier_percent / static_cast<double>(scored) : std::nan("");
  rep.overall_mean_error = ok ? overall / static_cast<double>(ok) : std::nan("");
  return rep;
}

std::uint64_t hash_pairs(const std::vector<EvalPair>& pairs) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : pairs) {
    const auto cat = static_cast<int>(p.category);
    mix(&cat, sizeof cat);
    for (const auto* img : {&p.a, &p.b}) {
      mix(&img->width, sizeof img->width);
      mix(&img->height, sizeof img->height);
      mix(img->pixels.data(), img->pixels.size() * sizeof(double));
    }
    for (const auto& c : p.points) mix(&c, sizeof c);
  }
  return h;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string report_row(const EvalReport& r) {
  std::string row = r.method;
  for (auto c : kCategories) {
    auto it = r.categories.find(c);
    row += "," + (it == r.categories.end() ? std::string() : fmt(it->second.mean_error));
  }
  const double rate = r.records.empty() ? 0.0 : static_cast<double>(r.failures) / static_cast<double>(r.records.size());
  row += "," + fmt(r.avg_error) + "," + fmt(r.avg_inlier_percent) + "," + fmt(rate);
  return row;
}

}  // namespace

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::string out = "method,RE,LT,LL,SF,LF,Avg,inlier_pct,failure_rate\n";
  for (const auto& r : reports) out += report_row(r) + "\n";
  return out;
}

std::string records_csv(const EvalReport& report) {
  std::string out = "pair,category,method,failed,mean_error,inliers,points\n";
  for (const auto& r : report.records) {
    const auto inl = std::count(r.inliers.begin(), r.inliers.end(), true);
    out += std::to_string(r.pair) + "," + to_string(r.category) + "," + r.method + "," + (r.failed ? "1" : "0") + "," +
           (r.failed ? std::string() : fmt(r.mean_error)) + "," + std::to_string(inl) + "," +
           std::to_string(r.inliers.size()) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// RANSAC

void RansacConfig::validate() const {
  if (iterations == 0) throw ConfigError("ransac: iterations must be at least 1");
  if (!(threshold > 0)) throw ConfigError("ransac: threshold must be positive");
  if (!(confidence > 0 && confidence < 1)) throw ConfigError("ransac: confidence must be in (0, 1)");
}

namespace {

std::size_t score(const Homography& h, std::span<const Point2> src, std::span<const Point2> dst, double thr,
                  std::vector<bool>* flags) {
  const auto& m = h.matrix();
  std::size_t count = 0;
  if (flags) flags->assign(src.size(), false);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = m(2, 0) * src[i].x + m(2, 1) * src[i].y + m(2, 2);
    if (std::abs(w) < kMinHomogeneousW) continue;
    const double x = (m(0, 0) * src[i].x + m(0, 1) * src[i].y + m(0, 2)) / w;
    const double y = (m(1, 0) * src[i].x + m(1, 1) * src[i].y + m(1, 2)) / w;
    const double e = std::hypot(x - dst[i].x, y - dst[i].y);
    if (e <= thr) {
      ++count;
      if (flags) (*flags)[i] = true;
    }
  }
  return count;
}

}  // namespace

RansacResult ransac_dlt(std::span<const Point2> src, std::span<const Point2> dst, const RansacConfig& cfg) {
  cfg.validate();
  if (src.size() != dst.size()) throw DimensionError("ransac: source and destination counts differ");
  RansacResult res;
  const std::size_t n = src.size();
  if (n < 4) {
    res.failure = "fewer than 4 correspondences";
    return res;
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t best = 0;
  Homography best_h;
  std::size_t bound = cfg.iterations;
  std::size_t it = 0;
  for (; it < bound; ++it) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t k = 0; k < 4; ++k) {
      do idx[k] = pick(rng);
      while (std::find(idx.begin(), idx.begin() + static_cast<long>(k), idx[k]) != idx.begin() + static_cast<long>(k));
    }
    std::array<Point2, 4> s{}, d{};
    for (std::size_t k = 0; k < 4; ++k) {
      s[k] = src[idx[k]];
      d[k] = dst[idx[k]];
    }
    Homography h;
    try {
      h = dlt_from_correspondences(s, d);
    } catch (const GeometryError&) {
      continue;
    }
    const std::size_t count = score(h, src, dst, cfg.threshold, nullptr);
    if (count > best) {
      best = count;
      best_h = h;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double miss = 1 - std::pow(w, 4);
      if (miss <= 0) {
        bound = std::min(bound, it + 1);
      } else {
        const double need = std::log(1 - cfg.confidence) / std::log(miss);
        if (std::isfinite(need) && need < static_cast<double>(bound)) {
          bound = std::max<std::size_t>(it + 1, static_cast<std::size_t>(std::ceil(need)));
        }
      }
    }
  }
  res.iterations = it;
  if (best < 4) {
    res.failure = "no model with at least 4 inliers";
    return res;
  }
  std::vector<bool> flags;
  score(best_h, src, dst, cfg.threshold, &flags);
  std::vector<Point2> s, d;
  for (std::size_t i = 0; i < n; ++i)
    if (flags[i]) {
      s.push_back(src[i]);
      d.push_back(dst[i]);
    }
  res.h = best_h;
  try {
    const Homography refit = dlt_from_correspondences(s, d);
    if (score(refit, src, dst, cfg.threshold, nullptr) >= best) res.h = refit;
  } catch (const GeometryError&) {
  }
  res.inlier_count = score(res.h, src, dst, cfg.threshold, &res.inliers);
  res.success = true;
  return res;
}

// ---------------------------------------------------------------------------
// Ablations

std::vector<AblationResult> run_ablation_suite(const TrainConfig& base, const ModelConfig& model_cfg,
                                               const PairSource& data, const std::vector<EvalPair>& eval_pairs,
                                               double threshold, const std::optional<std::filesystem::path>& out_dir) {
  std::vector<AblationResult> results;
  for (auto arm : kAblationArms) {
    TrainConfig cfg = base;
    cfg.ablation = arm;
    std::optional<std::filesystem::path> dir;
    if (out_dir) dir = *out_dir / to_string(arm);
    auto trained = train(cfg, model_cfg, data, dir);
    AblationResult r;
    r.arm = arm;
    r.report = evaluate(to_string(arm), model_estimator(trained.model, trained.inference), eval_pairs, threshold);
    r.log = std::move(trained.log);
    results.push_back(std::move(r));
  }
  return results;
}

std::string ablation_csv(const std::vector<AblationResult>& results) {
  std::string out = "arm,RE,LT,LL,SF,LF,Avg,inlier_pct,failure_rate,pairs_hash\n";
  for (const auto& r : results) out += report_row(r.report) + "," + std::to_string(r.report.pairs_hash) + "\n";
  return out;
}

}  // namespace cah
