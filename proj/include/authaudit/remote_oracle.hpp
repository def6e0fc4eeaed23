#pragma once

// HTTP client for the feature-extraction service.
//
//   POST /v1/meta     {model}                                   -> OracleMeta
//   POST /v1/embed    {model, image_png_b64, mask?: [bool...]}  -> {embedding}
//   POST /v1/featmaps {model, image_png_b64}                    -> {shape, data}
//   POST /v1/pullback {model, image_png_b64, grad_embedding}    -> {shape, data}
//
// Arrays travel as base64 of little-endian f32. Tensor inputs are sent as the
// 8-bit 224x224 crop they denormalize to; the service must treat a 224x224
// image as already cropped.

#include <mutex>
#include <optional>
#include <string>

#include "authaudit/oracle.hpp"

namespace authaudit {

struct RemoteOptions {
  int max_in_flight = 4;
  int timeout_seconds = 120;
};

class RemoteOracle final : public Oracle {
 public:
  RemoteOracle(std::string base_url, std::string model, RemoteOptions options = {});

  OracleMeta meta() const override;

  std::vector<Embedding> embed_batch(std::span<const Tensor3> inputs, const ChannelMask* mask = nullptr) const;
  std::vector<FeatureMapTensor> featmaps_batch(std::span<const Tensor3> inputs) const;

  const std::string& model() const { return model_; }

 protected:
  Embedding do_embed(const Tensor3& input, const ChannelMask* mask) const override;
  FeatureMapTensor do_featmaps(const Tensor3& input) const override;
  FeatureMapTensor do_pullback(const Tensor3& input, std::span<const double> grad) const override;

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;

  std::string base_url_;
  std::string model_;
  RemoteOptions options_;
  mutable std::once_flag meta_once_;
  mutable OracleMeta meta_;
};

// Encodes a preprocessed tensor as the PNG payload of a request.
std::string tensor_to_png_b64(const Tensor3& input);

}  // namespace authaudit
