#include "dispfl/accounting.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "dispfl/error.hpp"

namespace dispfl {

std::int64_t bitset_bytes(std::span<const LayerShape> shapes) {
  std::int64_t n = 0;
  for (const auto& s : shapes) n += (s.weight_count() + 7) / 8;
  return n;
}

PayloadBytes payload_bytes(const Mask& mask, std::span<const LayerShape> shapes) {
  if (!mask.congruent_with(shapes)) throw ShapeError(0, "payload_bytes: mask does not match shapes");
  PayloadBytes out;
  out.values_only = kValueBytes * (mask.total_ones() + total_bias_count(shapes));
  out.with_mask = out.values_only + bitset_bytes(shapes);
  return out;
}

std::int64_t training_flops(std::span<const LayerShape> shapes, std::span<const double> layer_density,
                            std::int64_t batch, std::int64_t steps) {
  if (layer_density.size() != shapes.size()) {
    throw ShapeError(std::min(layer_density.size(), shapes.size()), "training_flops: one density per layer");
  }
  if (batch < 0 || steps < 0) throw DomainError("training_flops: batch and steps must be >= 0");
  std::int64_t forward = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const double d = layer_density[l];
    if (!(d >= 0.0 && d <= 1.0)) {
      throw DomainError("training_flops: density of layer " + std::to_string(l) + " outside [0, 1]");
    }
    const auto macs = std::llround(2.0 * d * static_cast<double>(shapes[l].weight_count()));
    forward += (macs + shapes[l].bias_count()) * batch;
  }
  return 3 * forward * steps;
}

std::int64_t training_flops(std::span<const LayerShape> shapes, const Mask& mask, std::int64_t batch,
                            std::int64_t steps) {
  if (!mask.congruent_with(shapes)) throw ShapeError(0, "training_flops: mask does not match shapes");
  std::vector<double> d(shapes.size());
  for (std::size_t l = 0; l < shapes.size(); ++l) d[l] = mask.layer_density(l);
  return training_flops(shapes, d, batch, steps);
}

}  // namespace dispfl
