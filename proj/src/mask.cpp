#include "dispfl/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dispfl/error.hpp"

namespace dispfl {

void validate_shapes(std::span<const LayerShape> shapes) {
  if (shapes.empty()) throw ShapeError(0, "model has no layers");
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    if (shapes[l].fan_in < 1 || shapes[l].fan_out < 1) {
      throw ShapeError(l, "fan_in and fan_out must be >= 1");
    }
    if (l > 0 && shapes[l].fan_in != shapes[l - 1].fan_out) {
      throw ShapeError(l, "fan_in " + std::to_string(shapes[l].fan_in) +
                              " does not match previous fan_out " +
                              std::to_string(shapes[l - 1].fan_out));
    }
  }
}

Shapes mlp_shapes(std::size_t input_dim, std::span<const std::size_t> hidden,
                  std::size_t classes) {
  Shapes shapes;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    shapes.push_back({in, h, true});
    in = h;
  }
  shapes.push_back({in, classes, true});
  validate_shapes(shapes);
  return shapes;
}

std::int64_t total_weight_count(std::span<const LayerShape> shapes) {
  std::int64_t n = 0;
  for (const auto& s : shapes) n += s.weight_count();
  return n;
}

std::int64_t total_bias_count(std::span<const LayerShape> shapes) {
  std::int64_t n = 0;
  for (const auto& s : shapes) n += s.bias_count();
  return n;
}

Mask::Mask(std::vector<MaskLayer> layers) : layers_(std::move(layers)) {
  ones_.reserve(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& m = layers_[l];
    if ((m > std::uint8_t{1}).any()) {
      throw DomainError("mask layer " + std::to_string(l) + " has a non-binary entry");
    }
    const std::int64_t ones = m.template cast<std::int64_t>().sum();
    ones_.push_back(ones);
    total_ones_ += ones;
    total_size_ += m.size();
  }
  density_ = total_size_ > 0 ? static_cast<double>(total_ones_) / static_cast<double>(total_size_)
                             : 0.0;
}

Mask Mask::ones(std::span<const LayerShape> shapes) {
  std::vector<MaskLayer> layers;
  for (const auto& s : shapes) {
    layers.push_back(MaskLayer::Ones(static_cast<Eigen::Index>(s.fan_out),
                                     static_cast<Eigen::Index>(s.fan_in)));
  }
  return Mask(std::move(layers));
}

Mask Mask::zeros(std::span<const LayerShape> shapes) {
  std::vector<MaskLayer> layers;
  for (const auto& s : shapes) {
    layers.push_back(MaskLayer::Zero(static_cast<Eigen::Index>(s.fan_out),
                                     static_cast<Eigen::Index>(s.fan_in)));
  }
  return Mask(std::move(layers));
}

double Mask::layer_density(std::size_t l) const {
  const auto size = layer_size(l);
  return size > 0 ? static_cast<double>(layer_ones(l)) / static_cast<double>(size) : 0.0;
}

bool Mask::congruent_with(std::span<const LayerShape> shapes) const noexcept {
  if (shapes.size() != layers_.size()) return false;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    if (layers_[l].rows() != static_cast<Eigen::Index>(shapes[l].fan_out) ||
        layers_[l].cols() != static_cast<Eigen::Index>(shapes[l].fan_in)) {
      return false;
    }
  }
  return true;
}

bool Mask::congruent_with(const Mask& other) const noexcept {
  if (other.layers_.size() != layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].rows() != other.layers_[l].rows() ||
        layers_[l].cols() != other.layers_[l].cols()) {
      return false;
    }
  }
  return true;
}

bool operator==(const Mask& a, const Mask& b) {
  if (!a.congruent_with(b)) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if ((a.layers_[l] != b.layers_[l]).any()) return false;
  }
  return true;
}

namespace {

void check_density(double density) {
  if (!(density > 0.0 && density <= 1.0)) {
    throw DomainError("density must lie in (0, 1], got " + std::to_string(density));
  }
}

}  // namespace

std::vector<double> erk_layer_densities(std::span<const LayerShape> shapes, double density) {
  check_density(density);
  validate_shapes(shapes);

  const std::size_t n = shapes.size();
  std::vector<double> score(n);
  std::vector<double> params(n);
  double total = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    const auto fi = static_cast<double>(shapes[l].fan_in);
    const auto fo = static_cast<double>(shapes[l].fan_out);
    score[l] = (fi + fo) / (fi * fo);
    params[l] = fi * fo;
    total += params[l];
  }

  std::vector<bool> pinned(n, false);
  double scale = 0.0;
  for (;;) {
    double budget = density * total;
    double weighted = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      if (pinned[l]) {
        budget -= params[l];
      } else {
        weighted += score[l] * params[l];
      }
    }
    if (weighted <= 0.0) break;
    scale = budget / weighted;

    // Pin the single highest-scoring layer that overflows, then re-solve.
    std::size_t worst = n;
    for (std::size_t l = 0; l < n; ++l) {
      if (!pinned[l] && scale * score[l] > 1.0 && (worst == n || score[l] > score[worst])) {
        worst = l;
      }
    }
    if (worst == n) break;
    pinned[worst] = true;
  }

  std::vector<double> out(n);
  for (std::size_t l = 0; l < n; ++l) {
    out[l] = pinned[l] ? 1.0 : std::min(1.0, scale * score[l]);
  }
  return out;
}

std::vector<std::int64_t> erk_layer_counts(std::span<const LayerShape> shapes, double density) {
  const auto d = erk_layer_densities(shapes, density);
  const std::size_t n = shapes.size();
  std::vector<std::int64_t> counts(n);
  std::vector<double> exact(n);
  std::int64_t sum = 0;
  for (std::size_t l = 0; l < n; ++l) {
    const auto size = shapes[l].weight_count();
    exact[l] = d[l] * static_cast<double>(size);
    counts[l] = std::clamp<std::int64_t>(std::llround(exact[l]), 0, size);
    sum += counts[l];
  }

  const std::int64_t target =
      std::llround(density * static_cast<double>(total_weight_count(shapes)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Residual exact - count: positive means the layer was rounded down.
  auto residual = [&](std::size_t l) { return exact[l] - static_cast<double>(counts[l]); };

  while (sum < target) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return residual(a) > residual(b); });
    auto it = std::find_if(order.begin(), order.end(),
                           [&](std::size_t l) { return counts[l] < shapes[l].weight_count(); });
    if (it == order.end()) break;
    ++counts[*it];
    ++sum;
  }
  while (sum > target) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return residual(a) < residual(b); });
    auto it = std::find_if(order.begin(), order.end(), [&](std::size_t l) { return counts[l] > 0; });
    if (it == order.end()) break;
    --counts[*it];
    --sum;
  }
  return counts;
}

Mask erk_init(std::span<const LayerShape> shapes, double density, Rng& rng) {
  const auto counts = erk_layer_counts(shapes, density);
  std::vector<MaskLayer> layers;
  layers.reserve(shapes.size());
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto rows = static_cast<Eigen::Index>(shapes[l].fan_out);
    const auto cols = static_cast<Eigen::Index>(shapes[l].fan_in);
    const auto size = static_cast<std::size_t>(shapes[l].weight_count());
    const auto ones = static_cast<std::size_t>(counts[l]);
    if (ones == size) {
      layers.push_back(MaskLayer::Ones(rows, cols));
      continue;
    }
    MaskLayer m = MaskLayer::Zero(rows, cols);
    if (ones > 0) {
      for (std::size_t idx : sample_without_replacement(rng, size, ones)) {
        m.data()[idx] = 1;
      }
    }
    layers.push_back(std::move(m));
  }
  return Mask(std::move(layers));
}

HammingDistance hamming_distance(const Mask& a, const Mask& b) {
  if (!a.congruent_with(b)) {
    throw ShapeError(0, "hamming_distance: masks are not shape-congruent");
  }
  HammingDistance out;
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    out.raw += (a.layer(l) != b.layer(l)).count();
  }
  out.normalized = a.total_size() > 0
                       ? static_cast<double>(out.raw) / static_cast<double>(a.total_size())
                       : 0.0;
  return out;
}

double mask_union_density(std::span<const Mask> masks) {
  if (masks.empty()) throw DomainError("mask_union_density: empty mask list");
  std::vector<MaskLayer> acc = masks.front().layers();
  for (std::size_t i = 1; i < masks.size(); ++i) {
    if (!masks[i].congruent_with(masks.front())) {
      throw ShapeError(0, "mask_union_density: mask " + std::to_string(i) + " is not congruent");
    }
    for (std::size_t l = 0; l < acc.size(); ++l) acc[l] = acc[l].max(masks[i].layer(l));
  }
  return Mask(std::move(acc)).density();
}

}  // namespace dispfl
