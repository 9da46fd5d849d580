#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dispfl {

/// Structure of one fully connected layer. Weights are fan_out x fan_in.
struct LayerShape {
  std::size_t fan_in = 1;
  std::size_t fan_out = 1;
  bool has_bias = true;

  std::int64_t weight_count() const noexcept {
    return static_cast<std::int64_t>(fan_in * fan_out);
  }
  std::int64_t bias_count() const noexcept {
    return has_bias ? static_cast<std::int64_t>(fan_out) : 0;
  }

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

using Shapes = std::vector<LayerShape>;

/// Throws ShapeError unless every layer is non-empty and consecutive layers chain.
void validate_shapes(std::span<const LayerShape> shapes);

/// input -> hidden... -> classes, ReLU between layers, all with biases.
Shapes mlp_shapes(std::size_t input_dim, std::span<const std::size_t> hidden,
                  std::size_t classes);

std::int64_t total_weight_count(std::span<const LayerShape> shapes);
std::int64_t total_bias_count(std::span<const LayerShape> shapes);

}  // namespace dispfl
