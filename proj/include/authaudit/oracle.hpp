#pragma once

// Everything the audit needs from a frozen vision backbone. Implementations:
// SyntheticBackbone (deterministic reference), RemoteOracle (HTTP client of
// the feature-extraction service).

#include <array>
#include <span>
#include <string>
#include <vector>

#include "authaudit/image.hpp"
#include "json.hpp"

namespace authaudit {

struct OracleMeta {
  std::size_t embed_dim = 0;
  std::array<int, 3> featmap_shape{};  // C, H, W
  std::array<int, 3> input_size{kInputSize, kInputSize, 3};
  std::string backbone_name;
  std::string target_layer_name;

  int channels() const { return featmap_shape[0]; }
};

nlohmann::json to_json(const OracleMeta& meta);
OracleMeta meta_from_json(const nlohmann::json& j);

struct Embedding {
  std::vector<float> values;
  std::size_t size() const { return values.size(); }
  bool operator==(const Embedding&) const = default;
};

using FeatureMapTensor = Tensor3;

// Target-layer output channels kept (true) or ablated (false).
struct ChannelMask {
  std::vector<bool> retained;

  static ChannelMask all(std::size_t channels) { return {std::vector<bool>(channels, true)}; }
  std::size_t size() const { return retained.size(); }
  std::size_t count() const;
  bool is_all() const { return count() == size(); }
  bool operator==(const ChannelMask&) const = default;
};

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual OracleMeta meta() const = 0;

  // `input` is a preprocessed 3 x H x W tensor. With a mask, ablated channels
  // of the target layer are zeroed before everything downstream.
  Embedding embed(const Tensor3& input, const ChannelMask* mask = nullptr) const;
  Embedding embed(const Image& image, const ChannelMask* mask = nullptr) const {
    return embed(preprocess(image), mask);
  }
  FeatureMapTensor featmaps(const Tensor3& input) const;
  FeatureMapTensor featmaps(const Image& image) const { return featmaps(preprocess(image)); }
  // J^T g, where J is the Jacobian of the embedding w.r.t. target-layer activations.
  FeatureMapTensor pullback(const Tensor3& input, std::span<const double> grad_embedding) const;

  // Backends whose embedding is a known function of the target-layer
  // activations expose it, so masked embeddings can be computed from cached
  // feature maps without another forward pass.
  virtual bool has_tail() const { return false; }
  virtual Embedding tail(const FeatureMapTensor& featmaps, const ChannelMask* mask) const;

 protected:
  virtual Embedding do_embed(const Tensor3& input, const ChannelMask* mask) const = 0;
  virtual FeatureMapTensor do_featmaps(const Tensor3& input) const = 0;
  virtual FeatureMapTensor do_pullback(const Tensor3& input, std::span<const double> grad) const = 0;
};

void check_mask(const ChannelMask* mask, int channels);

}  // namespace authaudit
