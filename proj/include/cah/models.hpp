#pragma once

// The three sub-networks: feature extractor f, mask predictor m and the
// residual homography estimator h, plus the two-branch forward pass.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cah/geometry.hpp"
#include "cah/tape.hpp"
#include "cah/tensor.hpp"

namespace cah {

enum class ModelVariant { paper, tiny };

std::string to_string(ModelVariant v);
ModelVariant parse_model_variant(std::string_view s);

struct ModelConfig {
  ModelVariant variant = ModelVariant::tiny;
  std::size_t feature_channels = 1;
  /// Hidden widths of f; its last conv outputs feature_channels.
  std::vector<std::size_t> feature_widths{4, 4};
  /// Rescale each feature map to unit RMS. Without it the subtracted feature
  /// distance is unbounded below in the feature scale.
  bool normalize_features = true;
  /// Hidden widths of m; its last conv outputs one channel.
  std::vector<std::size_t> mask_widths{4, 4, 4, 4};
  std::size_t stem_width = 32;
  std::vector<std::size_t> stage_widths{32, 32, 64, 64};
  std::vector<std::size_t> estimator_blocks{1, 1, 1, 1};
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  /// Reserved; normalization layers are not implemented.
  bool batch_norm = false;

  /// Layer configuration of the full-size network.
  static ModelConfig paper();
  /// Same topology with reduced widths for CPU training.
  static ModelConfig tiny();

  void validate() const;
  /// Smallest spatial extent accepted by h: the product of its strides.
  std::size_t estimator_min_size() const;
  /// Number of convolutions on h's main path (excludes projection shortcuts).
  std::size_t estimator_main_convs() const;
};

inline constexpr double kFeatureNormEpsilon = 1e-6;

/// Parameter budget of the tiny variant, keeps CPU training practical.
inline constexpr std::size_t kTinyParameterBudget = 200000;

/// Named parameter tensors in a fixed order.
template <typename T>
class BasicModelParams {
 public:
  using Entry = std::pair<std::string, BasicTensor<T>>;

  void add(std::string name, BasicTensor<T> t);
  const BasicTensor<T>& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t parameter_count() const;
  /// Independent copy; every tensor requires grad.
  BasicModelParams clone() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

template <typename T>
struct BasicModel {
  ModelConfig config;
  BasicModelParams<T> params;
};

using Model = BasicModel<double>;
using ModelF = BasicModel<float>;

/// Kaiming fan-in normal conv weights, zero biases, zero final FC layer.
template <typename T>
BasicModel<T> init_model(const ModelConfig& config, std::uint64_t seed);

template <typename T>
BasicModel<T> cast_model(const BasicModel<double>& m);

/// f: 1x1xHxW -> 1xCxHxW.
template <typename T>
BasicTensor<T> extract_features(BasicTape<T>& tape, const BasicModel<T>& model, const BasicTensor<T>& patch);

/// m: 1x1xHxW -> 1x1xHxW, values in (0, 1).
template <typename T>
BasicTensor<T> predict_mask(BasicTape<T>& tape, const BasicModel<T>& model, const BasicTensor<T>& patch);

/// h on [Ga, Gb]: returns the 8 corner offsets as a [1, 8] tensor.
template <typename T>
BasicTensor<T> estimate_offsets(BasicTape<T>& tape, const BasicModel<T>& model, const BasicTensor<T>& ga,
                                const BasicTensor<T>& gb);

struct ForwardOptions {
  /// G = F * M when on, G = F otherwise.
  bool mask_attention = true;
  /// Replaces f by the identity (F = I).
  bool identity_features = false;
};

template <typename T>
struct BasicPipelineOutput {
  BasicTensor<T> h_ab, h_ba;              // [3, 3]
  BasicTensor<T> offsets_ab, offsets_ba;  // [1, 8]
  BasicTensor<T> fa, fb, ma, mb;
};

template <typename T>
BasicPipelineOutput<T> forward_pipeline(BasicTape<T>& tape, const BasicModel<T>& model, const BasicTensor<T>& ia,
                                        const BasicTensor<T>& ib, const ForwardOptions& options);

/// Convenience: H_ab for a pair without keeping a tape.
template <typename T>
Homography predict_homography(const BasicModel<T>& model, const BasicTensor<T>& ia, const BasicTensor<T>& ib,
                              const ForwardOptions& options = {});

}  // namespace cah
