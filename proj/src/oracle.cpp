#include "authaudit/oracle.hpp"

#include <algorithm>

namespace authaudit {

nlohmann::json to_json(const OracleMeta& meta) {
  return {{"embed_dim", meta.embed_dim},
          {"featmap_shape", meta.featmap_shape},
          {"input_size", meta.input_size},
          {"backbone_name", meta.backbone_name},
          {"target_layer_name", meta.target_layer_name}};
}

OracleMeta meta_from_json(const nlohmann::json& j) {
  OracleMeta m;
  m.embed_dim = j.at("embed_dim").get<std::size_t>();
  m.featmap_shape = j.at("featmap_shape").get<std::array<int, 3>>();
  if (j.contains("input_size")) m.input_size = j.at("input_size").get<std::array<int, 3>>();
  m.backbone_name = j.value("backbone_name", "");
  m.target_layer_name = j.value("target_layer_name", "");
  if (m.embed_dim < 1 || std::any_of(m.featmap_shape.begin(), m.featmap_shape.end(), [](int d) { return d < 1; })) {
    throw OracleError("oracle meta has a non-positive dimension");
  }
  return m;
}

std::size_t ChannelMask::count() const {
  return static_cast<std::size_t>(std::count(retained.begin(), retained.end(), true));
}

void check_mask(const ChannelMask* mask, int channels) {
  if (mask == nullptr) return;
  if (mask->size() != static_cast<std::size_t>(channels)) {
    throw std::invalid_argument("channel mask has length " + std::to_string(mask->size()) + ", expected " +
                                std::to_string(channels));
  }
}

Embedding Oracle::embed(const Tensor3& input, const ChannelMask* mask) const {
  check_mask(mask, meta().channels());
  return do_embed(input, mask);
}

FeatureMapTensor Oracle::featmaps(const Tensor3& input) const { return do_featmaps(input); }

FeatureMapTensor Oracle::pullback(const Tensor3& input, std::span<const double> grad_embedding) const {
  if (grad_embedding.size() != meta().embed_dim) {
    throw std::invalid_argument("pullback: gradient length " + std::to_string(grad_embedding.size()) +
                                " does not match embed_dim " + std::to_string(meta().embed_dim));
  }
  return do_pullback(input, grad_embedding);
}

Embedding Oracle::tail(const FeatureMapTensor&, const ChannelMask*) const {
  throw OracleError("backend '" + meta().backbone_name + "' does not expose its embedding tail");
}

}  // namespace authaudit
