#pragma once

// Central finite-difference oracle. Independent of every backward rule: it
// only evaluates the forward function.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cah/tape.hpp"
#include "cah/tensor.hpp"

namespace cah::testing {

using ScalarFn = std::function<Tensor(Tape&, std::vector<Tensor>&)>;

struct GradCheck {
  double relative_error = 0;  // norm-wise over all checked inputs
  double analytic_norm = 0;
  double numeric_norm = 0;
};

/// Compares tape gradients of f against central differences with `step`.
/// Only inputs with requires_grad are checked.
/// With `max_coords` > 0 only that many randomly chosen coordinates per input
/// are perturbed (seeded by `seed`).
inline GradCheck gradcheck(const ScalarFn& f, std::vector<Tensor> inputs, double step = 1e-5,
                           std::size_t max_coords = 0, std::uint64_t seed = 0) {
  std::mt19937_64 pick(seed);
  for (auto& t : inputs) t.clear_grad();
  {
    Tape tape;
    Tensor loss = f(tape, inputs);
    tape.backward(loss);
  }
  double diff2 = 0, a2 = 0, n2 = 0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto data = t.mutable_data();
    std::vector<std::size_t> coords(data.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords > 0 && coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), pick);
      coords.resize(max_coords);
    }
    for (std::size_t i : coords) {
      const double orig = data[i];
      data[i] = orig + step;
      double fp, fm;
      {
        Tape tape;
        fp = f(tape, inputs).item();
      }
      data[i] = orig - step;
      {
        Tape tape;
        fm = f(tape, inputs).item();
      }
      data[i] = orig;
      const double numeric = (fp - fm) / (2 * step);
      diff2 += (numeric - analytic[i]) * (numeric - analytic[i]);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
  }
  GradCheck r;
  r.analytic_norm = std::sqrt(a2);
  r.numeric_norm = std::sqrt(n2);
  r.relative_error = std::sqrt(diff2) / std::max({r.analytic_norm, r.numeric_norm, 1e-8});
  return r;
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.mutable_data()) v = d(rng);
  t.set_requires_grad(requires_grad);
  return t;
}

}  // namespace cah::testing
