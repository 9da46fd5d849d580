#pragma once

// Per-round mask search: prune the smallest-magnitude active weights of each
// layer, then reactivate the same number of inactive coordinates with the
// largest dense-gradient magnitude. Layer-wise ones-counts never change.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dispfl/client.hpp"
#include "dispfl/error.hpp"
#include "dispfl/mask.hpp"
#include "dispfl/model.hpp"

namespace dispfl {

struct AnnealSchedule {
  double alpha0 = 0.5;
  std::size_t total_rounds = 1;
};

/// alpha_t = alpha0 / 2 * (1 + cos(pi * t / T)) for t in [0, T].
double anneal_rate(const AnnealSchedule& sched, std::size_t t);

struct PruneResult {
  Mask pruned;
  std::vector<std::int64_t> counts;  // coordinates removed per layer
};

/// Per layer, deactivates floor(alpha * ones_l) active coordinates of
/// smallest |w|, ties going to the lowest flat index first.
template <typename Scalar>
PruneResult prune_by_magnitude(const BasicModel<Scalar>& model, const Mask& mask, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw DomainError("prune_by_magnitude: alpha must lie in [0, 1)");
  }
  detail::check_model_mask(model, mask);
  std::vector<MaskLayer> layers = mask.layers();
  std::vector<std::int64_t> counts(layers.size(), 0);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto n = static_cast<std::int64_t>(std::floor(alpha * static_cast<double>(mask.layer_ones(l))));
    counts[l] = n;
    if (n == 0) continue;
    const Scalar* w = model.layers[l].weight.data();
    std::uint8_t* m = layers[l].data();
    std::vector<Eigen::Index> active;
    active.reserve(static_cast<std::size_t>(mask.layer_ones(l)));
    for (Eigen::Index i = 0; i < layers[l].size(); ++i) {
      if (m[i]) active.push_back(i);
    }
    std::partial_sort(active.begin(), active.begin() + n, active.end(), [&](Eigen::Index a, Eigen::Index b) {
      const auto wa = std::abs(w[a]);
      const auto wb = std::abs(w[b]);
      return wa < wb || (wa == wb && a < b);
    });
    for (std::int64_t i = 0; i < n; ++i) m[active[static_cast<std::size_t>(i)]] = 0;
  }
  return {Mask(std::move(layers)), std::move(counts)};
}

/// Per layer, activates counts[l] coordinates that are inactive in `pruned`,
/// choosing the largest |grad| with ties going to the lowest flat index.
template <typename Scalar>
Mask regrow_by_gradient(const Mask& pruned, const Mask& original, const BasicGradient<Scalar>& dense_grad,
                        std::span<const std::int64_t> counts) {
  if (!pruned.congruent_with(original)) throw ShapeError(0, "regrow_by_gradient: masks differ in shape");
  if (counts.size() != pruned.layer_count()) {
    throw ShapeError(std::min(counts.size(), pruned.layer_count()), "regrow_by_gradient: one count per layer");
  }
  if (dense_grad.layers.size() != pruned.layer_count()) {
    throw ShapeError(std::min(dense_grad.layers.size(), pruned.layer_count()),
                     "regrow_by_gradient: gradient layer count differs");
  }
  std::vector<MaskLayer> layers = pruned.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& g = dense_grad.layers[l].weight;
    if (g.rows() != layers[l].rows() || g.cols() != layers[l].cols()) {
      throw ShapeError(l, "regrow_by_gradient: gradient shape differs from mask");
    }
    if (((pruned.layer(l) != 0) && (original.layer(l) == 0)).any()) {
      throw DomainError("regrow_by_gradient: pruned mask is not a subset of the original in layer " +
                        std::to_string(l));
    }
    const auto n = counts[l];
    if (n < 0) throw DomainError("regrow_by_gradient: negative count");
    if (n == 0) continue;
    std::uint8_t* m = layers[l].data();
    std::vector<Eigen::Index> inactive;
    for (Eigen::Index i = 0; i < layers[l].size(); ++i) {
      if (!m[i]) inactive.push_back(i);
    }
    if (static_cast<std::int64_t>(inactive.size()) < n) {
      throw DomainError("regrow_by_gradient: layer " + std::to_string(l) + " has " +
                        std::to_string(inactive.size()) + " inactive coordinates, needs " + std::to_string(n));
    }
    const Scalar* gd = g.data();
    std::partial_sort(inactive.begin(), inactive.begin() + n, inactive.end(), [&](Eigen::Index a, Eigen::Index b) {
      const auto ga = std::abs(gd[a]);
      const auto gb = std::abs(gd[b]);
      return ga > gb || (ga == gb && a < b);
    });
    for (std::int64_t i = 0; i < n; ++i) m[inactive[static_cast<std::size_t>(i)]] = 1;
  }
  return Mask(std::move(layers));
}

struct MaskSearchOptions {
  AnnealSchedule schedule;
  std::size_t batch_size = 32;
};

/// One mask update for a freshly trained client at round t: dense gradient on
/// a fresh batch from its own stream, prune, regrow, install the new mask.
/// Pruned and regrown coordinates both hold exactly 0.0 afterwards; regrown
/// ones pick up values from the next aggregation. When no layer would prune
/// a coordinate the state is returned untouched and no batch is drawn.
/// Records churn (Hamming distance old/new) and the search FLOPs.
ClientState evolve_mask(ClientState state, const MaskSearchOptions& opts, std::size_t t);

}  // namespace dispfl
