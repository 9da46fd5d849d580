#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dispfl/rng.hpp"
#include "dispfl/shapes.hpp"

namespace dispfl {

/// One layer of a binary mask, aligned 1:1 with a fan_out x fan_in weight
/// matrix. Flat indices are row-major.
using MaskLayer = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-layer binary selection of active weight coordinates. Biases are never
/// masked. Immutable once built; per-layer and global counts are cached.
class Mask {
 public:
  Mask() = default;

  /// Throws DomainError if any entry is not 0 or 1.
  explicit Mask(std::vector<MaskLayer> layers);

  static Mask ones(std::span<const LayerShape> shapes);
  static Mask zeros(std::span<const LayerShape> shapes);

  std::size_t layer_count() const noexcept { return layers_.size(); }
  const MaskLayer& layer(std::size_t l) const { return layers_.at(l); }
  const std::vector<MaskLayer>& layers() const noexcept { return layers_; }

  std::int64_t layer_ones(std::size_t l) const { return ones_.at(l); }
  std::int64_t layer_size(std::size_t l) const { return layers_.at(l).size(); }
  double layer_density(std::size_t l) const;

  std::int64_t total_ones() const noexcept { return total_ones_; }
  std::int64_t total_size() const noexcept { return total_size_; }

  /// ones / total over all weight entries; 0 for an empty mask.
  double density() const noexcept { return density_; }

  /// True when layer count and every layer's dimensions match `shapes`.
  bool congruent_with(std::span<const LayerShape> shapes) const noexcept;
  bool congruent_with(const Mask& other) const noexcept;

  friend bool operator==(const Mask& a, const Mask& b);

 private:
  std::vector<MaskLayer> layers_;
  std::vector<std::int64_t> ones_;
  std::int64_t total_ones_ = 0;
  std::int64_t total_size_ = 0;
  double density_ = 0.0;
};

/// Per-layer densities chosen by the Erdos-Renyi-Kernel rule: proportional to
/// (fan_in + fan_out) / (fan_in * fan_out), scaled so the weighted mean equals
/// `density`; layers that would exceed 1 are pinned to 1 and the scale re-solved.
std::vector<double> erk_layer_densities(std::span<const LayerShape> shapes, double density);

/// Number of active weights per layer for an ERK allocation. Each layer gets
/// round(d_l * P_l); if those roundings do not add up to round(density * P),
/// the difference is settled one weight at a time on the layers whose
/// fractional part was closest to the rounding boundary.
std::vector<std::int64_t> erk_layer_counts(std::span<const LayerShape> shapes, double density);

/// ERK mask with the counts above placed uniformly at random per layer.
Mask erk_init(std::span<const LayerShape> shapes, double density, Rng& rng);

struct HammingDistance {
  std::int64_t raw = 0;
  double normalized = 0.0;
};

/// Coordinate-wise disagreement count between two identically shaped masks.
HammingDistance hamming_distance(const Mask& a, const Mask& b);

/// Density of the elementwise OR of all masks.
double mask_union_density(std::span<const Mask> masks);

}  // namespace dispfl
