#include "cli.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "cah/checkpoint.hpp"
#include "cah/sampler.hpp"

namespace cah::cli {

namespace fs = std::filesystem;

namespace {

std::size_t parse_size(const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw UsageError("expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& v) { return static_cast<std::uint64_t>(parse_size(v)); }

int parse_int(const std::string& v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw UsageError("expected an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw UsageError("expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("expected true or false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto b = item.find_first_not_of(' '), e = item.find_last_not_of(' ');
    if (b == std::string::npos) throw UsageError("empty list element in '" + v + "'");
    out.push_back(item.substr(b, e - b + 1));
  }
  if (out.empty()) throw UsageError("expected a comma-separated list");
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split(v)) out.push_back(parse_size(s));
  return out;
}

std::string show(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(std::size_t v) { return std::to_string(v); }
std::string show(int v) { return std::to_string(v); }

template <typename C>
std::string join(const C& items, auto&& fmt) {
  std::string out;
  for (const auto& x : items) {
    if (!out.empty()) out += ',';
    out += fmt(x);
  }
  return out;
}

struct Key {
  std::string name;
  std::function<void(Settings&, const std::string&)> apply;
  std::function<std::string(const Settings&)> get;
};

#define CAH_KEY(name, field, parse)                                          \
  Key {                                                                      \
    name, [](Settings& s, const std::string& v) { s.field = parse(v); },     \
        [](const Settings& s) { return show(s.field); }                      \
  }

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = {
      CAH_KEY("gen.width", gen.width, parse_size),
      CAH_KEY("gen.height", gen.height, parse_size),
      CAH_KEY("gen.perturbation_px", gen.perturbation_px, parse_double),
      Key{"gen.motion",
          [](Settings& s, const std::string& v) {
            if (v == "homography") s.gen.motion = Motion::homography;
            else if (v == "translation") s.gen.motion = Motion::translation;
            else throw UsageError("gen.motion must be homography or translation, got '" + v + "'");
          },
          [](const Settings& s) { return std::string(s.gen.motion == Motion::homography ? "homography" : "translation"); }},
      CAH_KEY("gen.texture_octaves", gen.texture_octaves, parse_int),
      CAH_KEY("gen.primitives", gen.primitives, parse_int),
      CAH_KEY("gen.illumination_gain", gen.illumination_gain, parse_double),
      CAH_KEY("gen.noise", gen.noise, parse_double),
      CAH_KEY("gen.seed", gen.seed, parse_u64),
      Key{"gen.categories",
          [](Settings& s, const std::string& v) {
            s.categories.clear();
            for (const auto& c : split(v)) s.categories.push_back(parse_category(c));
          },
          [](const Settings& s) { return join(s.categories, [](Category c) { return to_string(c); }); }},

      Key{"model.variant", [](Settings& s, const std::string& v) { s.model.variant = parse_model_variant(v); },
          [](const Settings& s) { return to_string(s.model.variant); }},
      CAH_KEY("model.feature_channels", model.feature_channels, parse_size),
      Key{"model.feature_widths", [](Settings& s, const std::string& v) { s.model.feature_widths = parse_sizes(v); },
          [](const Settings& s) { return join(s.model.feature_widths, [](std::size_t w) { return show(w); }); }},
      CAH_KEY("model.normalize_features", model.normalize_features, parse_bool),
      Key{"model.mask_widths", [](Settings& s, const std::string& v) { s.model.mask_widths = parse_sizes(v); },
          [](const Settings& s) { return join(s.model.mask_widths, [](std::size_t w) { return show(w); }); }},
      CAH_KEY("model.stem_width", model.stem_width, parse_size),
      Key{"model.stage_widths", [](Settings& s, const std::string& v) { s.model.stage_widths = parse_sizes(v); },
          [](const Settings& s) { return join(s.model.stage_widths, [](std::size_t w) { return show(w); }); }},
      Key{"model.estimator_blocks", [](Settings& s, const std::string& v) { s.model.estimator_blocks = parse_sizes(v); },
          [](const Settings& s) { return join(s.model.estimator_blocks, [](std::size_t w) { return show(w); }); }},
      CAH_KEY("model.input_height", model.input_height, parse_size),
      CAH_KEY("model.input_width", model.input_width, parse_size),

      CAH_KEY("train.iterations", train.iterations, parse_size),
      CAH_KEY("train.stage1_fraction", train.stage1_fraction, parse_double),
      CAH_KEY("train.batch_size", train.batch_size, parse_size),
      CAH_KEY("train.learning_rate", train.learning_rate, parse_double),
      CAH_KEY("train.adam_beta1", train.adam_beta1, parse_double),
      CAH_KEY("train.adam_beta2", train.adam_beta2, parse_double),
      CAH_KEY("train.adam_epsilon", train.adam_epsilon, parse_double),
      CAH_KEY("train.lr_decay_factor", train.lr_decay_factor, parse_double),
      CAH_KEY("train.decay_interval", train.decay_interval, parse_size),
      CAH_KEY("train.lambda", train.lambda, parse_double),
      CAH_KEY("train.mu", train.mu, parse_double),
      CAH_KEY("train.loss_epsilon", train.loss_epsilon, parse_double),
      CAH_KEY("train.mask_floor", train.mask_floor, parse_double),
      CAH_KEY("train.detach_denominator", train.detach_denominator, parse_bool),
      Key{"train.ablation", [](Settings& s, const std::string& v) { s.train.ablation = parse_ablation(v); },
          [](const Settings& s) { return to_string(s.train.ablation); }},
      CAH_KEY("train.seed", train.seed, parse_u64),
      CAH_KEY("train.checkpoint_interval", train.checkpoint_interval, parse_size),
      CAH_KEY("train.threads", train.threads, parse_int),

      CAH_KEY("eval.threshold", eval.threshold, parse_double),
      CAH_KEY("eval.per_category", eval.per_category, parse_size),
      CAH_KEY("eval.first_index", eval.first_index, parse_u64),
  };
  return table;
}

#undef CAH_KEY

const Key* find_key(const std::string& name) {
  for (const auto& k : key_table())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& Config::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.push_back(k.name);
    return out;
  }();
  return names;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw UsageError("unknown config key '" + key + "'");
  values_[key] = value;
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + assignment + "'");
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void Config::load_file(const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("config file not found: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UsageError("cannot parse config " + path.string() + ": " + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw UsageError(path.string() + ": key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) set(section + "." + key, value.data());
  }
}

Settings Config::resolve() const {
  Settings s;
  // the variant picks the base layer widths; explicit model keys refine it
  if (auto it = values_.find("model.variant"); it != values_.end()) {
    try {
      s.model = parse_model_variant(it->second) == ModelVariant::paper ? ModelConfig::paper() : ModelConfig::tiny();
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("model.variant: ") + e.what());
    }
  }
  for (const auto& k : key_table()) {
    auto it = values_.find(k.name);
    if (it == values_.end()) continue;
    try {
      k.apply(s, it->second);
    } catch (const std::exception& e) {
      throw UsageError(k.name + ": " + e.what());
    }
  }
  try {
    s.gen.validate();
    s.model.validate();
    s.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (s.categories.empty()) throw UsageError("gen.categories must not be empty");
  if (!(s.eval.threshold > 0)) throw UsageError("eval.threshold must be positive");
  return s;
}

std::string snapshot(const Settings& s) {
  std::string out, section;
  for (const auto& k : key_table()) {
    const auto dot = k.name.find('.');
    const auto sec = k.name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(s) + "\n";
  }
  return out;
}

void write_snapshot(const fs::path& dir, const Settings& s) {
  fs::create_directories(dir);
  std::ofstream f(dir / "resolved_config.ini", std::ios::trunc);
  f << snapshot(s);
  if (!f) throw std::runtime_error("cannot write " + (dir / "resolved_config.ini").string());
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text(path, text);
}

LoadedModel load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  return load_model(path);
}

std::vector<EvalPair> load_pairs(const std::string& manifest) {
  if (!fs::exists(manifest)) throw UsageError("manifest not found: " + manifest);
  std::vector<EvalPair> pairs;
  for (const auto& p : read_manifest(manifest)) pairs.push_back(load_eval_pair(p));
  if (pairs.empty()) throw UsageError("manifest lists no pairs: " + manifest);
  return pairs;
}

/// Random aligned crops of the model's input size from loaded pairs.
PairSource manifest_source(std::vector<EvalPair> pairs, const ModelConfig& model, std::uint64_t seed) {
  auto shared = std::make_shared<const std::vector<EvalPair>>(std::move(pairs));
  const std::size_t w = model.input_width, h = model.input_height;
  return [shared, w, h, seed](std::uint64_t index) {
    const auto& p = (*shared)[index % shared->size()];
    std::mt19937_64 rng(seed ^ (index * 0x9E3779B97F4A7C15ULL));
    auto c = random_crop_pair(p.a, p.b, w, h, rng);
    return std::make_pair(std::move(c.a), std::move(c.b));
  };
}

std::string pair_stem(std::uint64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%05llu", static_cast<unsigned long long>(i));
  return buf;
}

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  Settings settings() const {
    Config c;
    if (!config_path.empty()) c.load_file(config_path);
    if (seed) {
      c.set("gen.seed", std::to_string(*seed));
      c.set("train.seed", std::to_string(*seed));
    }
    for (const auto& s : sets) c.set_assignment(s);
    return c.resolve();
  }
};

void add_common(CLI::App* app, Common& c, bool needs_out) {
  app->add_option("--config", c.config_path, "INI config file");
  app->add_option("--set", c.sets, "Override, section.key=value (repeatable)");
  app->add_option("--seed", c.seed, "Seed for generation and training");
  auto* o = app->add_option("--out", c.out_dir, "Output directory");
  if (needs_out) o->required();
}

Image warp_image(const Image& img, const Homography& h) { return to_image(warp(to_tensor(img), h).warped); }

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Content-aware unsupervised homography estimation"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("generate", "Write synthetic pairs with annotations");
  add_common(gen, common, true);
  std::size_t count = 0;
  std::uint64_t first_index = 0;
  std::string only_category;
  gen->add_option("--count", count, "Number of pairs")->required();
  gen->add_option("--first-index", first_index, "Index of the first pair");
  gen->add_option("--category", only_category, "Single category instead of cycling gen.categories");

  auto* tr = app.add_subcommand("train", "Two-stage unsupervised training");
  add_common(tr, common, true);
  std::string data;
  tr->add_option("--data", data, "Manifest of annotation files (default: synthetic pairs)");

  auto* est = app.add_subcommand("estimate", "Homography between two images");
  add_common(est, common, false);
  std::string image_a, image_b, checkpoint, overlay;
  est->add_option("image_a", image_a)->required();
  est->add_option("image_b", image_b)->required();
  est->add_option("--checkpoint", checkpoint)->required();
  est->add_option("--overlay", overlay, "Ghost overlay PNG of warp(a) against b");

  auto* ev = app.add_subcommand("evaluate", "Corner/point transfer error report");
  add_common(ev, common, true);
  std::string method = "model";
  ev->add_option("--method", method)->check(CLI::IsMember({"identity", "gt", "model"}));
  ev->add_option("--checkpoint", checkpoint);
  ev->add_option("--data", data, "Manifest of annotation files (default: synthetic held-out pairs)");

  auto* ab = app.add_subcommand("ablate", "Train and evaluate all seven arms");
  add_common(ab, common, true);
  ab->add_option("--data", data, "Manifest of evaluation pairs (default: synthetic held-out pairs)");

  auto* vis = app.add_subcommand("visualize", "Ghost overlays and masks");
  add_common(vis, common, true);
  std::string homography_file;
  vis->add_option("image_a", image_a)->required();
  vis->add_option("image_b", image_b)->required();
  vis->add_option("--checkpoint", checkpoint);
  vis->add_option("--homography", homography_file, "Text file with 9 numbers, used instead of a checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const Settings s = common.settings();
    const fs::path out_dir = common.out_dir;

    if (gen->parsed()) {
      fs::create_directories(out_dir);
      std::optional<Category> fixed;
      if (!only_category.empty()) {
        try {
          fixed = parse_category(only_category);
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }
      std::vector<std::string> manifest;
      for (std::size_t k = 0; k < count; ++k) {
        const std::uint64_t index = first_index + k;
        const Category c = fixed ? *fixed : s.categories[index % s.categories.size()];
        const auto sample = generate_pair(s.gen, c, index);
        const auto stem = pair_stem(index);
        write_image(out_dir / (stem + "_a.png"), sample.patch_a, 16);
        write_image(out_dir / (stem + "_b.png"), sample.patch_b, 16);
        if (sample.dynamic_region) write_image(out_dir / (stem + "_dynamic.png"), *sample.dynamic_region);
        write_text(out_dir / (stem + "_h.txt"), format_homography(sample.gt_homography) + "\n");
        write_annotation(out_dir / (stem + ".txt"), Annotation{stem + "_a.png", stem + "_b.png", c, sample.gt_points});
        manifest.push_back(stem + ".txt");
      }
      write_lines(out_dir / "manifest.txt", manifest);
      write_snapshot(out_dir, s);
      out << "wrote " << count << " pairs to " << out_dir.string() << "\n";
      return kExitOk;
    }

    if (tr->parsed()) {
      const PairSource source = data.empty() ? synthetic_source(s.gen, s.categories)
                                             : manifest_source(load_pairs(data), s.model, s.train.seed);
      write_snapshot(out_dir, s);
      const auto result = train(s.train, s.model, source, out_dir);
      out << result.log.back() << "\n";
      return kExitOk;
    }

    if (est->parsed()) {
      const auto loaded = load_checkpoint(checkpoint);
      const Image a = read_image(image_a), b = read_image(image_b);
      const Homography h = estimate_on_images(loaded.model, loaded.options, a, b);
      const auto v = h.values();
      char buf[64];
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          std::snprintf(buf, sizeof buf, "%.17g", v[static_cast<std::size_t>(3 * r + c)]);
          out << (c ? " " : "") << buf;
        }
        out << "\n";
      }
      out << "offsets:";
      for (double o : homography_to_offsets(h, Frame{a.width, a.height}).values()) {
        std::snprintf(buf, sizeof buf, " %.17g", o);
        out << buf;
      }
      out << "\n";
      if (!overlay.empty()) {
        const fs::path dir = fs::path(overlay).parent_path().empty() ? fs::path(".") : fs::path(overlay).parent_path();
        fs::create_directories(dir);
        const auto g = ghost_overlay(warp_image(a, h), b);
        write_png_rgb(overlay, g.r, g.g, g.b);
        write_snapshot(dir, s);
      } else if (!common.out_dir.empty()) {
        write_snapshot(out_dir, s);
      }
      return kExitOk;
    }

    if (ev->parsed()) {
      const auto pairs = data.empty() ? synthetic_eval_set(s.gen, s.categories, s.eval.per_category, s.eval.first_index)
                                      : load_pairs(data);
      Estimator e;
      if (method == "identity") e = identity_estimator();
      else if (method == "gt") e = gt_estimator();
      else {
        if (checkpoint.empty()) throw UsageError("evaluate --method model needs --checkpoint");
        const auto loaded = load_checkpoint(checkpoint);
        e = model_estimator(loaded.model, loaded.options);
      }
      const auto report = evaluate(method, e, pairs, s.eval.threshold);
      fs::create_directories(out_dir);
      write_snapshot(out_dir, s);
      const auto table = report_csv({report});
      write_text(out_dir / "report.csv", table);
      write_text(out_dir / "records.csv", records_csv(report));
      out << table;
      return kExitOk;
    }

    if (ab->parsed()) {
      const auto pairs = data.empty() ? synthetic_eval_set(s.gen, s.categories, s.eval.per_category, s.eval.first_index)
                                      : load_pairs(data);
      write_snapshot(out_dir, s);
      const auto results = run_ablation_suite(s.train, s.model, synthetic_source(s.gen, s.categories), pairs,
                                              s.eval.threshold, out_dir);
      const auto table = ablation_csv(results);
      write_text(out_dir / "ablation.csv", table);
      out << table;
      return kExitOk;
    }

    if (vis->parsed()) {
      if (!checkpoint.empty() && !homography_file.empty())
        throw UsageError("visualize takes --checkpoint or --homography, not both");
      const Image a = read_image(image_a), b = read_image(image_b);
      fs::create_directories(out_dir);
      write_snapshot(out_dir, s);
      auto before = ghost_overlay(a, b);
      write_png_rgb(out_dir / "ghost_identity.png", before.r, before.g, before.b);
      std::optional<Homography> h;
      if (!homography_file.empty()) {
        std::ifstream f(homography_file);
        if (!f) throw UsageError("homography file not found: " + homography_file);
        std::stringstream text;
        text << f.rdbuf();
        h = parse_homography(text.str());
      }
      if (!checkpoint.empty()) {
        const auto loaded = load_checkpoint(checkpoint);
        h = estimate_on_images(loaded.model, loaded.options, a, b);
        Tape tape;
        write_image(out_dir / "mask_a.png", to_image(predict_mask(tape, loaded.model, to_tensor(a))));
        write_image(out_dir / "mask_b.png", to_image(predict_mask(tape, loaded.model, to_tensor(b))));
      }
      if (h) {
        auto after = ghost_overlay(warp_image(a, *h), b);
        write_png_rgb(out_dir / "ghost_warped.png", after.r, after.g, after.b);
        write_text(out_dir / "homography.txt", format_homography(*h) + "\n");
      }
      out << "wrote overlays to " << out_dir.string() << "\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace cah::cli
