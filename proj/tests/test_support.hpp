#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "dispfl/mask.hpp"
#include "dispfl/model.hpp"

namespace dispfl::testing {

inline Batch random_batch(Rng& rng, std::size_t n, std::size_t dim, int classes) {
  std::normal_distribution<double> normal;
  Batch b;
  b.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < b.features.size(); ++i) b.features.data()[i] = normal(rng);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(classes))));
  return b;
}

/// Largest relative error between `grad` and central differences (step 1e-5)
/// over active weights and all biases. Relative to max(|fd|, 1e-3) so that
/// near-zero entries are compared absolutely.
inline double max_fd_error(const Model& model, const Mask& mask, const Batch& batch, const Gradient& grad) {
  const double h = 1e-5;
  double worst = 0.0;
  auto probe = [&](double* slot, double analytic) {
    const double saved = *slot;
    Model& m = const_cast<Model&>(model);
    *slot = saved + h;
    const double up = forward(m, mask, batch).loss;
    *slot = saved - h;
    const double down = forward(m, mask, batch).loss;
    *slot = saved;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::max(std::abs(fd), 1e-3));
  };
  Model& m = const_cast<Model&>(model);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& L = m.layers[l];
    for (Eigen::Index i = 0; i < L.weight.size(); ++i) {
      if (mask.layer(l).data()[i]) probe(L.weight.data() + i, grad.layers[l].weight.data()[i]);
    }
    for (Eigen::Index i = 0; i < L.bias.size(); ++i) probe(L.bias.data() + i, grad.layers[l].bias(i));
  }
  return worst;
}

}  // namespace dispfl::testing
