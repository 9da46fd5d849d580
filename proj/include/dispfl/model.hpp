#pragma once

// Feed-forward classifier with explicit forward/backward passes.
//
// Layers are fully connected with ReLU between them and identity on the
// last layer, followed by softmax cross-entropy averaged over the batch.
// Every operation takes the weights through a Mask: forward/backward run
// on W .* M, so a masked-out coordinate never influences the output.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dispfl/error.hpp"
#include "dispfl/mask.hpp"
#include "dispfl/rng.hpp"
#include "dispfl/shapes.hpp"

namespace dispfl {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Weight matrix (fan_out x fan_in) plus an optional bias (empty when absent).
template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;
  Vector<Scalar> bias;

  bool has_bias() const noexcept { return bias.size() > 0; }
  LayerShape shape() const {
    return {static_cast<std::size_t>(weight.cols()), static_cast<std::size_t>(weight.rows()),
            has_bias()};
  }
};

namespace detail {

template <typename Scalar>
Shapes shapes_of(const std::vector<DenseLayer<Scalar>>& layers) {
  Shapes out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(l.shape());
  return out;
}

template <typename Scalar>
std::vector<DenseLayer<Scalar>> zero_layers(std::span<const LayerShape> shapes) {
  std::vector<DenseLayer<Scalar>> layers;
  layers.reserve(shapes.size());
  for (const auto& s : shapes) {
    DenseLayer<Scalar> layer;
    layer.weight = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(s.fan_out),
                                        static_cast<Eigen::Index>(s.fan_in));
    if (s.has_bias) layer.bias = Vector<Scalar>::Zero(static_cast<Eigen::Index>(s.fan_out));
    layers.push_back(std::move(layer));
  }
  return layers;
}

}  // namespace detail

template <typename Scalar>
struct BasicModel {
  std::vector<DenseLayer<Scalar>> layers;

  static BasicModel zeros(std::span<const LayerShape> shapes) {
    validate_shapes(shapes);
    return {detail::zero_layers<Scalar>(shapes)};
  }

  Shapes shapes() const { return detail::shapes_of(layers); }
  std::size_t input_dim() const { return static_cast<std::size_t>(layers.front().weight.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(layers.back().weight.rows()); }

  friend bool operator==(const BasicModel& a, const BasicModel& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
      const auto& x = a.layers[l];
      const auto& y = b.layers[l];
      if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols() ||
          x.bias.size() != y.bias.size()) {
        return false;
      }
      if (x.weight != y.weight || x.bias != y.bias) return false;
    }
    return true;
  }
};

/// Same layout as the model it was computed for.
template <typename Scalar>
struct BasicGradient {
  std::vector<DenseLayer<Scalar>> layers;

  static BasicGradient zeros(std::span<const LayerShape> shapes) {
    return {detail::zero_layers<Scalar>(shapes)};
  }

  Shapes shapes() const { return detail::shapes_of(layers); }
};

template <typename Scalar>
struct BasicBatch {
  Matrix<Scalar> features;  // n x d, one sample per row
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

using Model = BasicModel<double>;
using Gradient = BasicGradient<double>;
using Batch = BasicBatch<double>;

struct ForwardResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// W .* M with +0.0 (never -0.0) at masked coordinates.
template <typename Scalar>
Matrix<Scalar> apply_mask(const Matrix<Scalar>& w, const MaskLayer& m) {
  return (m != std::uint8_t{0}).select(w.array(), Scalar(0)).matrix();
}

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
template <typename Scalar>
BasicModel<Scalar> init_model(std::span<const LayerShape> shapes, Rng& rng) {
  auto model = BasicModel<Scalar>::zeros(shapes);
  for (auto& layer : model.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = static_cast<Scalar>(dist(rng));
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] = static_cast<Scalar>(dist(rng));
    }
  }
  return model;
}

/// Model with masked-out weights set to exactly zero.
template <typename Scalar>
BasicModel<Scalar> masked_copy(const BasicModel<Scalar>& model, const Mask& mask) {
  BasicModel<Scalar> out = model;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    out.layers[l].weight = apply_mask(model.layers[l].weight, mask.layer(l));
  }
  return out;
}

namespace detail {

template <typename Scalar>
void check_model_mask(const BasicModel<Scalar>& model, const Mask& mask) {
  if (model.layers.empty()) throw ShapeError(0, "model has no layers");
  if (mask.layer_count() != model.layers.size()) {
    throw ShapeError(std::min(mask.layer_count(), model.layers.size()),
                     "mask has " + std::to_string(mask.layer_count()) + " layers, model has " +
                         std::to_string(model.layers.size()));
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& w = model.layers[l].weight;
    const auto& m = mask.layer(l);
    if (w.rows() != m.rows() || w.cols() != m.cols()) {
      throw ShapeError(l, "mask is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                              ", weight is " + std::to_string(w.rows()) + "x" +
                              std::to_string(w.cols()));
    }
    if (l > 0 && w.cols() != model.layers[l - 1].weight.rows()) {
      throw ShapeError(l, "fan_in does not match previous layer fan_out");
    }
  }
}

template <typename Scalar>
void check_batch(const BasicModel<Scalar>& model, const BasicBatch<Scalar>& batch) {
  if (batch.size() == 0) throw ShapeError(0, "batch is empty");
  if (static_cast<std::size_t>(batch.features.rows()) != batch.size()) {
    throw ShapeError(0, "batch has " + std::to_string(batch.features.rows()) + " rows but " +
                            std::to_string(batch.size()) + " labels");
  }
  if (static_cast<std::size_t>(batch.features.cols()) != model.input_dim()) {
    throw ShapeError(0, "batch feature dimension " + std::to_string(batch.features.cols()) +
                            " does not match fan_in " + std::to_string(model.input_dim()));
  }
  const auto classes = static_cast<int>(model.output_dim());
  for (int y : batch.labels) {
    if (y < 0 || y >= classes) {
      throw ShapeError(model.layers.size() - 1,
                       "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

/// Cached intermediate values of one forward pass.
template <typename Scalar>
struct Trace {
  std::vector<Matrix<Scalar>> weights;  // effective (masked) weights
  std::vector<Matrix<Scalar>> inputs;   // input to layer l, n x fan_in
  std::vector<Matrix<Scalar>> pre;      // pre-activation of layer l, n x fan_out
  Matrix<Scalar> probs;                 // softmax of the last pre-activation
  double loss = 0.0;
  double accuracy = 0.0;
};

template <typename Scalar>
Trace<Scalar> run_forward(const BasicModel<Scalar>& model, const Mask* mask,
                          const BasicBatch<Scalar>& batch) {
  Trace<Scalar> tr;
  const std::size_t depth = model.layers.size();
  tr.weights.reserve(depth);
  tr.inputs.reserve(depth);
  tr.pre.reserve(depth);

  Matrix<Scalar> act = batch.features;
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = model.layers[l];
    tr.weights.push_back(mask ? apply_mask(layer.weight, mask->layer(l)) : layer.weight);
    Matrix<Scalar> z = act * tr.weights.back().transpose();
    if (layer.has_bias()) z.rowwise() += layer.bias.transpose();
    tr.inputs.push_back(std::move(act));
    act = (l + 1 < depth) ? Matrix<Scalar>(z.cwiseMax(Scalar(0))) : z;
    tr.pre.push_back(std::move(z));
  }

  const Matrix<Scalar>& logits = tr.pre.back();
  const auto n = logits.rows();
  tr.probs.resize(n, logits.cols());
  double loss = 0.0;
  std::int64_t correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = logits.row(i);
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    const Scalar top = row[best];
    auto shifted = (row.array() - top).exp();
    const Scalar norm = shifted.sum();
    tr.probs.row(i) = shifted / norm;
    const int y = batch.labels[static_cast<std::size_t>(i)];
    loss += static_cast<double>(std::log(norm) - (row[y] - top));
    if (best == y) ++correct;
  }
  tr.loss = loss / static_cast<double>(n);
  tr.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return tr;
}

template <typename Scalar>
BasicGradient<Scalar> run_backward(const BasicModel<Scalar>& model, const Trace<Scalar>& tr,
                                   const BasicBatch<Scalar>& batch) {
  const std::size_t depth = model.layers.size();
  const auto n = static_cast<Eigen::Index>(batch.size());
  BasicGradient<Scalar> grad;
  grad.layers.resize(depth);

  Matrix<Scalar> delta = tr.probs;
  for (Eigen::Index i = 0; i < n; ++i) delta(i, batch.labels[static_cast<std::size_t>(i)]) -= Scalar(1);
  delta /= static_cast<Scalar>(n);

  for (std::size_t l = depth; l-- > 0;) {
    auto& g = grad.layers[l];
    g.weight = delta.transpose() * tr.inputs[l];
    if (model.layers[l].has_bias()) g.bias = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix<Scalar> upstream = delta * tr.weights[l];
      delta = (tr.pre[l - 1].array() > Scalar(0)).select(upstream.array(), Scalar(0)).matrix();
    }
  }
  return grad;
}

template <typename Scalar>
void check_finite(const BasicGradient<Scalar>& grad) {
  for (std::size_t l = 0; l < grad.layers.size(); ++l) {
    if (!grad.layers[l].weight.allFinite() || !grad.layers[l].bias.allFinite()) {
      throw NumericError(l, "non-finite gradient");
    }
  }
}

template <typename Scalar>
void check_congruent(const std::vector<DenseLayer<Scalar>>& a, const std::vector<DenseLayer<Scalar>>& b) {
  if (a.size() != b.size()) {
    throw ShapeError(std::min(a.size(), b.size()), "layer count mismatch");
  }
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a[l].weight.rows() != b[l].weight.rows() || a[l].weight.cols() != b[l].weight.cols() ||
        a[l].bias.size() != b[l].bias.size()) {
      throw ShapeError(l, "parameter shapes differ");
    }
  }
}

}  // namespace detail

/// Mean cross-entropy and top-1 accuracy of the masked model on `batch`.
/// Ties in the arg-max resolve to the lowest class index.
template <typename Scalar>
ForwardResult forward(const BasicModel<Scalar>& model, const Mask& mask,
                      const BasicBatch<Scalar>& batch) {
  detail::check_model_mask(model, mask);
  detail::check_batch(model, batch);
  const auto tr = detail::run_forward(model, &mask, batch);
  return {tr.loss, tr.accuracy};
}

/// Full gradient of the loss at the current weights, no mask involved.
template <typename Scalar>
BasicGradient<Scalar> dense_gradient(const BasicModel<Scalar>& model, const BasicBatch<Scalar>& batch) {
  detail::check_model_mask(model, Mask::ones(model.shapes()));
  detail::check_batch(model, batch);
  const auto tr = detail::run_forward<Scalar>(model, nullptr, batch);
  auto grad = detail::run_backward(model, tr, batch);
  detail::check_finite(grad);
  return grad;
}

/// Loss/accuracy and masked gradient from a single forward pass.
template <typename Scalar>
std::pair<ForwardResult, BasicGradient<Scalar>> masked_value_and_gradient(
    const BasicModel<Scalar>& model, const Mask& mask, const BasicBatch<Scalar>& batch) {
  detail::check_model_mask(model, mask);
  detail::check_batch(model, batch);
  const auto tr = detail::run_forward(model, &mask, batch);
  auto grad = detail::run_backward(model, tr, batch);
  for (std::size_t l = 0; l < grad.layers.size(); ++l) {
    grad.layers[l].weight = apply_mask(grad.layers[l].weight, mask.layer(l));
  }
  detail::check_finite(grad);
  return {ForwardResult{tr.loss, tr.accuracy}, std::move(grad)};
}

/// m .* grad L evaluated at W .* m. Weight coordinates with mask 0 are exactly
/// 0; bias gradients are not masked.
template <typename Scalar>
BasicGradient<Scalar> masked_gradient(const BasicModel<Scalar>& model, const Mask& mask,
                                      const BasicBatch<Scalar>& batch) {
  return masked_value_and_gradient(model, mask, batch).second;
}

/// w - lr * grad, elementwise over weights and biases.
template <typename Scalar>
BasicModel<Scalar> sgd_step(const BasicModel<Scalar>& model, const BasicGradient<Scalar>& grad,
                            Scalar lr) {
  if (!(lr > Scalar(0)) || !std::isfinite(static_cast<double>(lr))) {
    throw DomainError("sgd_step: learning rate must be positive and finite");
  }
  detail::check_congruent(model.layers, grad.layers);
  BasicModel<Scalar> out = model;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    out.layers[l].weight -= lr * grad.layers[l].weight;
    if (out.layers[l].has_bias()) out.layers[l].bias -= lr * grad.layers[l].bias;
  }
  return out;
}

}  // namespace dispfl
