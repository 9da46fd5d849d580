#pragma once

// Intersection-weighted gossip averaging of sparse models, and the sparse
// payload a client ships to its neighbours.
//
// For each weight coordinate the own model and every received model that has
// the coordinate active contribute one vote:
//
//     w' = (w_own + sum_j w_j) / (m_own + sum_j m_j)  .*  m_own
//
// with 0/0 := 0. Masked-out coordinates hold 0 by contract, so a neighbour
// that lacks a coordinate adds to neither numerator nor denominator. Biases
// are unmasked and averaged arithmetically over own + received.

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dispfl/accounting.hpp"
#include "dispfl/error.hpp"
#include "dispfl/mask.hpp"
#include "dispfl/model.hpp"

namespace dispfl {

template <typename Scalar>
struct MaskedModel {
  BasicModel<Scalar> model;
  Mask mask;
};

/// Throws ProtocolError unless every masked-out weight is exactly zero.
template <typename Scalar>
void check_zero_preservation(const BasicModel<Scalar>& model, const Mask& mask, const std::string& who) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (((mask.layer(l) == 0) && (model.layers[l].weight.array() != Scalar(0))).any()) {
      throw ProtocolError(who + ": nonzero weight outside its mask in layer " + std::to_string(l));
    }
  }
}

template <typename Scalar>
BasicModel<Scalar> aggregate(const MaskedModel<Scalar>& own, std::span<const MaskedModel<Scalar>> received) {
  detail::check_model_mask(own.model, own.mask);
  for (std::size_t j = 0; j < received.size(); ++j) {
    detail::check_model_mask(received[j].model, received[j].mask);
    detail::check_congruent(own.model.layers, received[j].model.layers);
    check_zero_preservation(received[j].model, received[j].mask, "received model " + std::to_string(j));
  }

  BasicModel<Scalar> out = own.model;
  const auto contributors = static_cast<Scalar>(received.size() + 1);
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Array num = apply_mask(own.model.layers[l].weight, own.mask.layer(l)).array();
    Array den = own.mask.layer(l).template cast<Scalar>();
    for (const auto& r : received) {
      num += r.model.layers[l].weight.array();
      den += r.mask.layer(l).template cast<Scalar>();
    }
    const auto keep = (own.mask.layer(l) != 0) && (den > Scalar(0));
    out.layers[l].weight = keep.select(num / den.max(Scalar(1)), Scalar(0)).matrix();

    if (out.layers[l].has_bias()) {
      Vector<Scalar> sum = own.model.layers[l].bias;
      for (const auto& r : received) sum += r.model.layers[l].bias;
      out.layers[l].bias = sum / contributors;
    }
  }
  return out;
}

struct PayloadLayer {
  LayerShape shape;
  /// Bit i (LSB-first within each byte) is the mask at flat index i.
  std::vector<std::uint8_t> bitset;
  std::vector<double> values;  // surviving weights, flat-index order
  std::vector<double> bias;
};

/// What one client sends to a neighbour: its mask and surviving parameters.
struct SparsePayload {
  std::vector<PayloadLayer> layers;

  Shapes shapes() const;
  /// Same figures as payload_bytes() on the mask this payload encodes.
  PayloadBytes byte_size() const;
};

SparsePayload to_payload(const Model& model, const Mask& mask);
MaskedModel<double> from_payload(const SparsePayload& payload);

/// Wire form: per layer, the bitset (when `with_mask`), then surviving
/// weights and biases as little-endian float32. Its length equals
/// byte_size().with_mask or .values_only.
std::vector<std::uint8_t> encode_payload(const SparsePayload& payload, bool with_mask = true);

/// Inverse of encode_payload(.., true) given the layer shapes. Values are
/// rounded to float32 on the way out.
SparsePayload decode_payload(std::span<const std::uint8_t> bytes, std::span<const LayerShape> shapes);

}  // namespace dispfl
