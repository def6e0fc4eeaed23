#pragma once

#include <cstdint>
#include <vector>

#include "authaudit/oracle.hpp"

namespace authaudit {

struct ConvSpec {
  int out_channels;
  int kernel;
  int stride;
  int pad;
};

struct SyntheticConfig {
  std::uint64_t seed = 0;
  // Default: 3->16 k7 s4 p3, 16->32 k5 s4 p2, 32->32 k3 s1 p1; 224 -> 32x14x14.
  std::vector<ConvSpec> layers{{16, 7, 4, 3}, {32, 5, 4, 2}, {32, 3, 1, 1}};
  int input_channels = 3;
  int input_size = kInputSize;
};

// Deterministic stand-in for a frozen pretrained backbone: bias-free ReLU
// convolutions whose last layer is the target layer, followed by global
// average pooling. Weights are uniform(-a, a), a = sqrt(6 / fan_in), drawn
// from one PCG32 stream in layer order (out, in, ky, kx). Distinct seeds act
// as distinct architectures.
class SyntheticBackbone final : public Oracle {
 public:
  explicit SyntheticBackbone(std::uint64_t seed) : SyntheticBackbone(SyntheticConfig{seed}) {}
  explicit SyntheticBackbone(SyntheticConfig config);

  OracleMeta meta() const override { return meta_; }
  bool has_tail() const override { return true; }
  // Global average pool; masked channels contribute zero.
  Embedding tail(const FeatureMapTensor& featmaps, const ChannelMask* mask) const override;

  const SyntheticConfig& config() const { return config_; }
  const std::vector<float>& weights(std::size_t layer) const { return weights_.at(layer); }

 protected:
  Embedding do_embed(const Tensor3& input, const ChannelMask* mask) const override;
  FeatureMapTensor do_featmaps(const Tensor3& input) const override;
  FeatureMapTensor do_pullback(const Tensor3& input, std::span<const double> grad) const override;

 private:
  std::array<int, 2> output_hw(int height, int width) const;

  SyntheticConfig config_;
  OracleMeta meta_;
  std::vector<std::vector<float>> weights_;
};

// Single convolution + ReLU, exposed for tests.
Tensor3 conv2d_relu(const Tensor3& input, std::span<const float> weights, const ConvSpec& spec);

}  // namespace authaudit
