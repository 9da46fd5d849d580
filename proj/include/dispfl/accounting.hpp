#pragma once

#include <cstdint>
#include <span>

#include "dispfl/mask.hpp"
#include "dispfl/shapes.hpp"

namespace dispfl {

/// Bytes per transmitted parameter (IEEE-754 single precision on the wire).
inline constexpr std::int64_t kValueBytes = 4;

struct PayloadBytes {
  std::int64_t values_only = 0;  // surviving weights + biases
  std::int64_t with_mask = 0;    // values_only + one bitset per layer
};

/// values_only = 4 * (active weights + biases);
/// with_mask  = values_only + sum over layers of ceil(P_l / 8).
PayloadBytes payload_bytes(const Mask& mask, std::span<const LayerShape> shapes);

/// Bitset overhead alone: sum over layers of ceil(P_l / 8).
std::int64_t bitset_bytes(std::span<const LayerShape> shapes);

/// Multiply-add count for `steps` SGD steps on `batch` samples. Forward per
/// step is sum_l (2 * d_l * fan_in * fan_out + bias_l) * batch, the backward
/// pass is charged at twice the forward, so the total is 3 * forward * steps.
std::int64_t training_flops(std::span<const LayerShape> shapes, std::span<const double> layer_density,
                            std::int64_t batch, std::int64_t steps);

/// Same, with the per-layer densities read off `mask`.
std::int64_t training_flops(std::span<const LayerShape> shapes, const Mask& mask, std::int64_t batch,
                            std::int64_t steps);

}  // namespace dispfl
