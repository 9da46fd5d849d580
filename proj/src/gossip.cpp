#include "dispfl/gossip.hpp"

namespace dispfl {

Shapes SparsePayload::shapes() const {
  Shapes out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(l.shape);
  return out;
}

PayloadBytes SparsePayload::byte_size() const {
  PayloadBytes out;
  for (const auto& l : layers) {
    out.values_only += kValueBytes * static_cast<std::int64_t>(l.values.size() + l.bias.size());
  }
  out.with_mask = out.values_only + bitset_bytes(shapes());
  return out;
}

SparsePayload to_payload(const Model& model, const Mask& mask) {
  detail::check_model_mask(model, mask);
  check_zero_preservation(model, mask, "to_payload");
  SparsePayload p;
  p.layers.reserve(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    PayloadLayer out;
    out.shape = layer.shape();
    const auto size = static_cast<std::size_t>(layer.weight.size());
    out.bitset.assign((size + 7) / 8, 0);
    out.values.reserve(static_cast<std::size_t>(mask.layer_ones(l)));
    const std::uint8_t* m = mask.layer(l).data();
    const double* w = layer.weight.data();
    for (std::size_t i = 0; i < size; ++i) {
      if (!m[i]) continue;
      out.bitset[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
      out.values.push_back(w[i]);
    }
    out.bias.assign(layer.bias.data(), layer.bias.data() + layer.bias.size());
    p.layers.push_back(std::move(out));
  }
  return p;
}

MaskedModel<double> from_payload(const SparsePayload& payload) {
  const auto shapes = payload.shapes();
  validate_shapes(shapes);
  MaskedModel<double> out{Model::zeros(shapes), Mask{}};
  std::vector<MaskLayer> mask_layers;
  for (std::size_t l = 0; l < payload.layers.size(); ++l) {
    const auto& in = payload.layers[l];
    const auto size = static_cast<std::size_t>(in.shape.weight_count());
    if (in.bitset.size() != (size + 7) / 8) {
      throw ProtocolError("corrupt payload: layer " + std::to_string(l) + " bitset has " +
                          std::to_string(in.bitset.size()) + " bytes");
    }
    if (in.bias.size() != static_cast<std::size_t>(in.shape.bias_count())) {
      throw ProtocolError("corrupt payload: layer " + std::to_string(l) + " bias count mismatch");
    }
    MaskLayer m = MaskLayer::Zero(static_cast<Eigen::Index>(in.shape.fan_out),
                                  static_cast<Eigen::Index>(in.shape.fan_in));
    double* w = out.model.layers[l].weight.data();
    std::size_t next = 0;
    for (std::size_t i = 0; i < in.bitset.size() * 8; ++i) {
      if (!((in.bitset[i / 8] >> (i % 8)) & 1u)) continue;
      if (i >= size) {
        throw ProtocolError("corrupt payload: layer " + std::to_string(l) + " has bits set past the end");
      }
      if (next >= in.values.size()) {
        throw ProtocolError("corrupt payload: layer " + std::to_string(l) + " has fewer values than set bits");
      }
      m.data()[i] = 1;
      w[i] = in.values[next++];
    }
    if (next != in.values.size()) {
      throw ProtocolError("corrupt payload: layer " + std::to_string(l) + " has more values than set bits");
    }
    for (std::size_t i = 0; i < in.bias.size(); ++i) out.model.layers[l].bias[static_cast<Eigen::Index>(i)] = in.bias[i];
    mask_layers.push_back(std::move(m));
  }
  out.mask = Mask(std::move(mask_layers));
  return out;
}

namespace {

void put_f32(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
}

double get_f32(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + 4 > bytes.size()) throw ProtocolError("corrupt payload: truncated value section");
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[pos + static_cast<std::size_t>(i)]) << (8 * i);
  pos += 4;
  return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace

std::vector<std::uint8_t> encode_payload(const SparsePayload& payload, bool with_mask) {
  const auto size = payload.byte_size();
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(with_mask ? size.with_mask : size.values_only));
  for (const auto& l : payload.layers) {
    if (with_mask) out.insert(out.end(), l.bitset.begin(), l.bitset.end());
    for (double v : l.values) put_f32(out, v);
    for (double b : l.bias) put_f32(out, b);
  }
  return out;
}

SparsePayload decode_payload(std::span<const std::uint8_t> bytes, std::span<const LayerShape> shapes) {
  validate_shapes(shapes);
  SparsePayload p;
  std::size_t pos = 0;
  for (const auto& shape : shapes) {
    PayloadLayer l;
    l.shape = shape;
    const auto bitset_len = static_cast<std::size_t>((shape.weight_count() + 7) / 8);
    if (pos + bitset_len > bytes.size()) throw ProtocolError("corrupt payload: truncated bitset");
    l.bitset.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + bitset_len));
    pos += bitset_len;
    std::size_t ones = 0;
    for (auto b : l.bitset) ones += static_cast<std::size_t>(std::popcount(b));
    for (std::size_t i = 0; i < ones; ++i) l.values.push_back(get_f32(bytes, pos));
    for (std::int64_t i = 0; i < shape.bias_count(); ++i) l.bias.push_back(get_f32(bytes, pos));
    p.layers.push_back(std::move(l));
  }
  if (pos != bytes.size()) throw ProtocolError("corrupt payload: trailing bytes");
  return p;
}

}  // namespace dispfl
