#include "cah/objective.hpp"

#include <cstdio>

#include "cah/ops.hpp"
#include "cah/sampler.hpp"

namespace cah {

template <typename T>
BasicTensor<T> masked_alignment_loss(BasicTape<T>& tape, const BasicTensor<T>& f_warped, const BasicTensor<T>& f_target,
                                     const BasicTensor<T>& m_warped, const BasicTensor<T>& m_target,
                                     const BasicTensor<T>& validity, double epsilon, bool detach_denominator) {
  if (f_warped.shape() != f_target.shape()) {
    throw DimensionError("masked_alignment_loss: feature shapes differ, " + shape_str(f_warped.shape()) + " vs " +
                         shape_str(f_target.shape()));
  }
  const Shape mask_shape{f_target.dim(0), 1, f_target.dim(2), f_target.dim(3)};
  for (const auto* m : {&m_warped, &m_target, &validity}) {
    if (m->shape() != mask_shape) {
      throw DimensionError("masked_alignment_loss: weight map " + shape_str(m->shape()) + " must be " +
                           shape_str(mask_shape));
    }
  }
  auto weights = ops::mul(tape, ops::mul(tape, m_warped, m_target), validity);
  auto dist = ops::abs(tape, ops::sub(tape, f_warped, f_target));
  auto numer = ops::sum(tape, ops::mul(tape, dist, weights));
  auto denom = ops::sum(tape, detach_denominator ? ops::detach(weights) : weights);
  if (denom.item() < static_cast<T>(epsilon)) denom = BasicTensor<T>::scalar(static_cast<T>(epsilon));
  return ops::div(tape, numer, denom);
}

template <typename T>
BasicTensor<T> feature_distance(BasicTape<T>& tape, const BasicTensor<T>& fa, const BasicTensor<T>& fb) {
  if (fa.shape() != fb.shape()) {
    throw DimensionError("feature_distance: shapes differ, " + shape_str(fa.shape()) + " vs " + shape_str(fb.shape()));
  }
  const auto channels = fa.rank() == 4 ? fa.dim(1) : std::size_t{1};
  return ops::scale(tape, ops::mean(tape, ops::abs(tape, ops::sub(tape, fa, fb))), static_cast<T>(channels));
}

template <typename T>
BasicTensor<T> inverse_consistency(BasicTape<T>& tape, const BasicTensor<T>& h_ab, const BasicTensor<T>& h_ba) {
  auto a = ops::reshape(tape, h_ab, Shape{3, 3});
  auto b = ops::reshape(tape, h_ba, Shape{3, 3});
  auto product = normalize_homography(tape, ops::matmul(tape, a, b));
  BasicTensor<T> eye(Shape{3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.mutable_data()[4 * i] = T(1);
  auto d = ops::sub(tape, product, eye);
  return ops::sum(tape, ops::mul(tape, d, d));
}

template <typename T>
BasicLossBreakdown<T> total_loss(BasicTape<T>& tape, const BasicModel<T>& model, const BasicPipelineOutput<T>& out,
                                 const BasicTensor<T>& ia, const BasicTensor<T>& ib, const ObjectiveConfig& config,
                                 const ForwardOptions& options) {
  auto features = [&](const BasicTensor<T>& img) {
    return options.identity_features ? img : extract_features(tape, model, img);
  };
  auto ones = [&](const BasicTensor<T>& like) { return BasicTensor<T>(like.shape(), T(1)); };
  auto floored = [&](const BasicTensor<T>& m) {
    if (config.mask_floor == 0) return m;
    return ops::add_scalar(tape, ops::scale(tape, m, static_cast<T>(1 - config.mask_floor)),
                           static_cast<T>(config.mask_floor));
  };

  auto direction = [&](const BasicTensor<T>& src, const BasicTensor<T>& h, const BasicTensor<T>& m_src,
                       const BasicTensor<T>& f_tgt, const BasicTensor<T>& m_tgt) {
    auto warped_img = warp(tape, src, h);
    auto f_warped = features(warped_img.warped);
    BasicTensor<T> mw, mt;
    if (config.uniform_loss_masks) {
      mw = ones(m_src);
      mt = ones(m_tgt);
    } else {
      mw = warp(tape, floored(m_src), h).warped;
      mt = floored(m_tgt);
    }
    return masked_alignment_loss(tape, f_warped, f_tgt, mw, mt, warped_img.validity, config.epsilon,
                                 config.detach_denominator);
  };

  BasicLossBreakdown<T> b;
  b.lambda = config.triplet_term ? config.lambda : 0.0;
  b.mu = config.mu;
  b.epsilon = config.epsilon;
  b.ln_ab = direction(ia, out.h_ab, out.ma, out.fb, out.mb);
  b.ln_ba = direction(ib, out.h_ba, out.mb, out.fa, out.ma);
  b.feature_distance = feature_distance(tape, out.fa, out.fb);
  b.inverse_penalty = inverse_consistency(tape, out.h_ab, out.h_ba);
  auto aligned = ops::add(tape, b.ln_ab, b.ln_ba);
  auto total = ops::sub(tape, aligned, ops::scale(tape, b.feature_distance, static_cast<T>(b.lambda)));
  b.total = ops::add(tape, total, ops::scale(tape, b.inverse_penalty, static_cast<T>(b.mu)));
  return b;
}

std::string loss_csv_header() { return "step,ln_ab,ln_ba,feature_distance,inverse_penalty,total"; }

template <typename T>
std::string loss_csv_row(long step, const BasicLossBreakdown<T>& b) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g,%.9g", step, static_cast<double>(b.ln_ab.item()),
                static_cast<double>(b.ln_ba.item()), static_cast<double>(b.feature_distance.item()),
                static_cast<double>(b.inverse_penalty.item()), static_cast<double>(b.total.item()));
  return buf;
}

#define CAH_INSTANTIATE_OBJECTIVE(T)                                                                           \
  template BasicTensor<T> masked_alignment_loss(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
                                                const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                                const BasicTensor<T>&, double, bool);                          \
  template BasicTensor<T> feature_distance(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> inverse_consistency(BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);    \
  template BasicLossBreakdown<T> total_loss(BasicTape<T>&, const BasicModel<T>&, const BasicPipelineOutput<T>&, \
                                            const BasicTensor<T>&, const BasicTensor<T>&,                      \
                                            const ObjectiveConfig&, const ForwardOptions&);                    \
  template std::string loss_csv_row(long, const BasicLossBreakdown<T>&);

CAH_INSTANTIATE_OBJECTIVE(float)
CAH_INSTANTIATE_OBJECTIVE(double)

}  // namespace cah
