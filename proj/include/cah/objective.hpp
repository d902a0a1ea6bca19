#pragma once

// Triplet objective: masked normalized alignment loss in both directions, a
// subtracted feature distance that keeps features from collapsing, and an
// inverse-consistency penalty on H_ab * H_ba.

#include <string>

#include "cah/models.hpp"
#include "cah/tape.hpp"
#include "cah/tensor.hpp"

namespace cah {

struct ObjectiveConfig {
  double lambda = 2.0;
  double mu = 0.01;
  /// Floor on the alignment-loss denominator.
  double epsilon = 1e-6;
  /// Loss weights use floor + (1 - floor) * M, so masks cannot switch a
  /// pixel off entirely.
  double mask_floor = 0.2;
  /// Keep the -lambda * feature_distance term.
  bool triplet_term = true;
  /// Replace both masks by ones inside the alignment loss.
  bool uniform_loss_masks = false;
  /// Stop gradients through the denominator of the alignment loss.
  bool detach_denominator = false;
};

template <typename T>
struct BasicLossBreakdown {
  BasicTensor<T> ln_ab, ln_ba, feature_distance, inverse_penalty, total;
  double lambda = 2.0;
  double mu = 0.01;
  double epsilon = 1e-6;
};

/// sum_i w_i * |F_w - F_t|_1(i) / max(sum_i w_i, epsilon) with
/// w = M_w * M_t * validity. Masks and validity are [1, 1, H, W].
template <typename T>
BasicTensor<T> masked_alignment_loss(BasicTape<T>& tape, const BasicTensor<T>& f_warped, const BasicTensor<T>& f_target,
                                     const BasicTensor<T>& m_warped, const BasicTensor<T>& m_target,
                                     const BasicTensor<T>& validity, double epsilon = 1e-6,
                                     bool detach_denominator = false);

/// Per-pixel L1 norm over channels, averaged over pixels. Equals the
/// alignment loss under unit masks and full validity.
template <typename T>
BasicTensor<T> feature_distance(BasicTape<T>& tape, const BasicTensor<T>& fa, const BasicTensor<T>& fb);

/// ||normalize(H_ab * H_ba) - I||_F^2.
template <typename T>
BasicTensor<T> inverse_consistency(BasicTape<T>& tape, const BasicTensor<T>& h_ab, const BasicTensor<T>& h_ba);

/// Warps both patches and masks by the predicted homographies, re-extracts
/// features on the warped images and assembles every loss term on `tape`.
template <typename T>
BasicLossBreakdown<T> total_loss(BasicTape<T>& tape, const BasicModel<T>& model, const BasicPipelineOutput<T>& out,
                                 const BasicTensor<T>& ia, const BasicTensor<T>& ib, const ObjectiveConfig& config,
                                 const ForwardOptions& options);

/// CSV header/row for the training log: step, ln_ab, ln_ba, feature_distance,
/// inverse_penalty, total.
std::string loss_csv_header();
template <typename T>
std::string loss_csv_row(long step, const BasicLossBreakdown<T>& b);

}  // namespace cah
