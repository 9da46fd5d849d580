#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dispfl/model.hpp"
#include "dispfl/rng.hpp"

namespace dispfl {

/// Labelled samples: one row of `features` per entry of `labels`.
struct Dataset {
  Matrix<double> features;
  std::vector<int> labels;
  int classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }

  Dataset subset(std::span<const std::size_t> indices) const;
  Batch as_batch() const { return {features, labels}; }
  std::vector<std::int64_t> histogram() const;
};

/// Isotropic Gaussian clusters, one per class, unit covariance.
struct GaussianMixture {
  Matrix<double> means;  // classes x dim

  int classes() const noexcept { return static_cast<int>(means.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(means.cols()); }
};

/// Class means drawn uniformly on the sphere of radius `class_sep`.
GaussianMixture make_mixture(int classes, std::size_t dim, double class_sep, Rng& rng);

/// Exactly `per_class` samples of each class, class-major order.
Dataset sample_mixture(const GaussianMixture& mixture, std::size_t per_class, Rng& rng);

Dataset make_synthetic(int classes, std::size_t dim, std::size_t per_class, double class_sep,
                       Rng& rng);

/// Nonnegative per-class proportions that sum to one.
struct LabelDistribution {
  std::vector<double> proportions;

  static LabelDistribution from_histogram(std::span<const std::int64_t> counts);
  std::size_t support_size(double min_mass = 0.0) const;
};

struct Partition {
  std::vector<std::vector<std::size_t>> client_indices;
  std::vector<std::vector<std::int64_t>> histograms;
  /// Samples moved to fill otherwise-empty clients.
  std::size_t repairs = 0;
  /// Group id per client; all zero unless built by grouped_dirichlet.
  std::vector<std::size_t> group_of;

  std::size_t clients() const noexcept { return client_indices.size(); }
  LabelDistribution label_distribution(std::size_t client) const;
};

/// Apportions `total` units proportionally to `weights` by largest remainder.
/// Ties in the remainder go to the lower index. Weights must be nonnegative
/// and not all zero.
std::vector<std::int64_t> largest_remainder(std::span<const double> weights, std::int64_t total);

/// Per class, client proportions ~ Dir(alpha) and the class's (shuffled)
/// samples are dealt out accordingly. Empty clients then receive one sample
/// from the currently largest client.
Partition dirichlet_partition(const Dataset& ds, std::size_t clients, double alpha, Rng& rng);

/// Every class is cut into equal shards and each client gets shards from
/// exactly `classes_per_client` distinct classes.
Partition pathological_partition(const Dataset& ds, std::size_t clients,
                                 std::size_t classes_per_client, Rng& rng);

/// One Dir(alpha) label distribution per group; each class is split over
/// all clients in proportion to their group's weight for that class, so
/// clients of one group share label proportions while holding disjoint samples.
Partition grouped_dirichlet(const Dataset& ds, std::size_t groups, std::size_t clients_per_group,
                            double alpha, Rng& rng);

/// `n_test` indices into `pool` whose label counts are the largest-remainder
/// rounding of `target` * n_test. Draws without replacement while a class has
/// enough samples, with replacement otherwise.
std::vector<std::size_t> matched_test_shard(const LabelDistribution& target, const Dataset& pool,
                                            std::size_t n_test, Rng& rng);

double label_cosine_similarity(const LabelDistribution& a, const LabelDistribution& b);

/// Flat binary dump: n, d, C as little-endian u64, then features as
/// row-major little-endian f32, then labels as little-endian u32.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace dispfl
