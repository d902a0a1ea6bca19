#pragma once

// Two-stage training, Adam, evaluation metrics, ablation arms and the
// DLT + RANSAC baseline.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cah/models.hpp"
#include "cah/objective.hpp"
#include "cah/synthdata.hpp"

namespace cah {

enum class Ablation { full, no_mask, mask_attention_only, mask_ransac_only, no_triplet_term, no_feature_extractor, from_scratch };

inline constexpr std::array<Ablation, 7> kAblationArms{
    Ablation::no_mask,         Ablation::mask_attention_only,  Ablation::mask_ransac_only, Ablation::no_triplet_term,
    Ablation::no_feature_extractor, Ablation::from_scratch, Ablation::full};

std::string to_string(Ablation a);
Ablation parse_ablation(std::string_view s);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t iterations = 2000;
  double stage1_fraction = 0.5;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double lr_decay_factor = 0.8;
  std::size_t decay_interval = 200;
  double lambda = 2.0;
  double mu = 0.01;
  double loss_epsilon = 1e-6;
  double mask_floor = 0.2;
  bool detach_denominator = false;
  Ablation ablation = Ablation::full;
  std::uint64_t seed = 1;
  /// Zero writes only the final checkpoint.
  std::size_t checkpoint_interval = 0;
  /// Worker threads for the per-sample passes; 0 keeps the OpenMP default.
  int threads = 0;

  /// 120k iterations, batch 64, lr 1e-4, decay 0.8 every 12k, stage 1 for 60k.
  static TrainConfig paper();
  /// Counts scaled down for CPU runs; stage split kept at one half.
  static TrainConfig tiny();

  void validate() const;
  std::size_t stage1_iterations() const;
  double lr_at(std::size_t step) const;
};

/// Objective and forward switches of an arm at a given stage.
struct ArmSettings {
  ObjectiveConfig objective;
  ForwardOptions forward;
};
ArmSettings arm_settings(const TrainConfig& cfg, bool stage_two);
/// Forward options used at inference for a trained arm.
ForwardOptions inference_options(Ablation a);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameter buffers.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamHyper hyper = {}) : hyper_(hyper) {}

  void step(const std::vector<std::span<T>>& params, const std::vector<std::span<const T>>& grads, double lr);
  std::size_t steps() const { return t_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

 private:
  AdamHyper hyper_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Training pair for a global sample index.
using PairSource = std::function<std::pair<Image, Image>(std::uint64_t index)>;

/// Synthetic source: categories cycle through `categories` by index.
PairSource synthetic_source(const GenConfig& gen, std::vector<Category> categories);

struct TrainResult {
  Model model;
  ForwardOptions inference;
  /// CSV lines including the header.
  std::vector<std::string> log;
};

std::string train_log_header();

/// Writes train_log.csv and model.ckpt (plus periodic checkpoints) into
/// `out_dir` when it is given.
TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg, const PairSource& data,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalPair {
  Image a, b;
  Category category = Category::RE;
  std::vector<Correspondence> points;
  std::optional<Homography> gt;
};

EvalPair eval_pair_from(const PairSample& s);
std::vector<EvalPair> synthetic_eval_set(const GenConfig& gen, const std::vector<Category>& categories,
                                         std::size_t per_category, std::uint64_t first_index);
/// Images are resolved against the annotation file's directory.
EvalPair load_eval_pair(const std::filesystem::path& annotation);

/// Returns nullopt (or throws) when estimation fails.
using Estimator = std::function<std::optional<Homography>(const EvalPair&)>;

Estimator identity_estimator();
Estimator gt_estimator();
/// Runs the model on the pair, center-cropping to the model's input size.
Estimator model_estimator(const Model& model, ForwardOptions options);

/// H for full-size images from a center crop of the model's input size.
Homography estimate_on_images(const Model& model, const ForwardOptions& options, const Image& a, const Image& b);

struct EvalRecord {
  std::size_t pair = 0;
  Category category = Category::RE;
  std::string method;
  bool failed = false;
  std::vector<double> point_errors;
  std::vector<bool> inliers;
  double mean_error = 0;
};

struct CategoryStats {
  std::size_t pairs = 0;
  std::size_t failures = 0;
  double mean_error = 0;
  double inlier_percent = 0;
};

struct EvalReport {
  std::string method;
  double threshold = 3.0;
  std::vector<EvalRecord> records;
  std::map<Category, CategoryStats> categories;
  /// Mean of the category means.
  double avg_error = 0;
  double avg_inlier_percent = 0;
  /// Mean over all successful pairs.
  double overall_mean_error = 0;
  std::size_t failures = 0;
  std::uint64_t pairs_hash = 0;
};

/// Per pair: mean L2 transfer error of the labeled points; aggregated per
/// category, then averaged over categories.
EvalReport evaluate(const std::string& method, const Estimator& estimator, const std::vector<EvalPair>& pairs,
                    double threshold = 3.0);

/// Fingerprint of the evaluation pairs (pixels, points, categories).
std::uint64_t hash_pairs(const std::vector<EvalPair>& pairs);

/// Rows per report, columns RE, LT, LL, SF, LF, Avg; header
/// "method,RE,LT,LL,SF,LF,Avg,inlier_pct,failure_rate".
std::string report_csv(const std::vector<EvalReport>& reports);
std::string records_csv(const EvalReport& report);

/// Published real-data averages of the full method and of the identity row, for reference only.
inline constexpr double kReferenceAvgErrorOurs = 1.82;
inline constexpr double kReferenceAvgErrorIdentity = 7.15;

// ---------------------------------------------------------------------------
// Robust baseline

struct RansacConfig {
  std::size_t iterations = 500;
  double threshold = 1.0;
  double confidence = 0.999;
  std::uint64_t seed = 1;
  void validate() const;
};

struct RansacResult {
  bool success = false;
  Homography h;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
  std::size_t iterations = 0;
  std::string failure;
};

RansacResult ransac_dlt(std::span<const Point2> src, std::span<const Point2> dst, const RansacConfig& cfg);

// ---------------------------------------------------------------------------
// Ablations

struct AblationResult {
  Ablation arm = Ablation::full;
  EvalReport report;
  std::vector<std::string> log;
};

/// Trains and evaluates every arm from the same seed on the same data.
std::vector<AblationResult> run_ablation_suite(const TrainConfig& base, const ModelConfig& model_cfg,
                                               const PairSource& data, const std::vector<EvalPair>& eval_pairs,
                                               double threshold = 3.0,
                                               const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string ablation_csv(const std::vector<AblationResult>& results);

}  // namespace cah
