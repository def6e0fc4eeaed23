#include "authaudit/synthetic_backbone.hpp"

#include <algorithm>
#include <cmath>

#include "authaudit/kernels.hpp"
#include "authaudit/rng.hpp"

namespace authaudit {
namespace {

int conv_out(int size, const ConvSpec& s) { return (size + 2 * s.pad - s.kernel) / s.stride + 1; }

}  // namespace

Tensor3 conv2d_relu(const Tensor3& input, std::span<const float> weights, const ConvSpec& spec) {
  const int cin = input.channels;
  const int k = spec.kernel;
  const int oh = conv_out(input.height, spec);
  const int ow = conv_out(input.width, spec);
  if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d: input too small for kernel");
  const std::size_t patch = static_cast<std::size_t>(cin) * k * k;
  if (weights.size() != patch * spec.out_channels) throw std::invalid_argument("conv2d: weight size mismatch");

  // im2col: one contiguous row of length cin*k*k per output position.
  const std::size_t positions = static_cast<std::size_t>(oh) * ow;
  std::vector<float> cols(positions * patch, 0.0f);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      float* row = cols.data() + (static_cast<std::size_t>(oy) * ow + ox) * patch;
      for (int c = 0; c < cin; ++c) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * spec.stride - spec.pad + ky;
          if (iy < 0 || iy >= input.height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * spec.stride - spec.pad + kx;
            if (ix < 0 || ix >= input.width) continue;
            row[(static_cast<std::size_t>(c) * k + ky) * k + kx] = input.at(c, iy, ix);
          }
        }
      }
    }
  }

  const auto dot = kernels::active().dot_f32;
  Tensor3 out(spec.out_channels, oh, ow);
  for (int co = 0; co < spec.out_channels; ++co) {
    const float* w = weights.data() + static_cast<std::size_t>(co) * patch;
    auto plane = out.channel(co);
    for (std::size_t p = 0; p < positions; ++p) {
      plane[p] = std::max(0.0f, dot(w, cols.data() + p * patch, patch));
    }
  }
  return out;
}

SyntheticBackbone::SyntheticBackbone(SyntheticConfig config) : config_(std::move(config)) {
  if (config_.layers.empty()) throw std::invalid_argument("synthetic backbone needs at least one layer");
  Pcg32 rng(config_.seed);
  int cin = config_.input_channels;
  for (const auto& layer : config_.layers) {
    if (layer.out_channels < 1 || layer.kernel < 1 || layer.stride < 1 || layer.pad < 0) {
      throw std::invalid_argument("synthetic backbone: invalid layer configuration");
    }
    const std::size_t fan_in = static_cast<std::size_t>(cin) * layer.kernel * layer.kernel;
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<float> w(fan_in * layer.out_channels);
    for (auto& v : w) v = static_cast<float>(a * (2.0 * rng.uniform() - 1.0));
    weights_.push_back(std::move(w));
    cin = layer.out_channels;
  }
  const auto hw = output_hw(config_.input_size, config_.input_size);
  meta_.embed_dim = static_cast<std::size_t>(config_.layers.back().out_channels);
  meta_.featmap_shape = {config_.layers.back().out_channels, hw[0], hw[1]};
  meta_.input_size = {config_.input_size, config_.input_size, config_.input_channels};
  meta_.backbone_name = "synthetic-" + std::to_string(config_.seed);
  meta_.target_layer_name = "conv" + std::to_string(config_.layers.size());
}

std::array<int, 2> SyntheticBackbone::output_hw(int height, int width) const {
  for (const auto& layer : config_.layers) {
    height = conv_out(height, layer);
    width = conv_out(width, layer);
  }
  return {height, width};
}

FeatureMapTensor SyntheticBackbone::do_featmaps(const Tensor3& input) const {
  if (input.channels != config_.input_channels) {
    throw std::invalid_argument("synthetic backbone: expected " + std::to_string(config_.input_channels) +
                                "-channel input");
  }
  Tensor3 x = conv2d_relu(input, weights_[0], config_.layers[0]);
  for (std::size_t l = 1; l < config_.layers.size(); ++l) x = conv2d_relu(x, weights_[l], config_.layers[l]);
  return x;
}

Embedding SyntheticBackbone::tail(const FeatureMapTensor& featmaps, const ChannelMask* mask) const {
  check_mask(mask, featmaps.channels);
  Embedding e;
  e.values.assign(static_cast<std::size_t>(featmaps.channels), 0.0f);
  const double inv = 1.0 / static_cast<double>(featmaps.plane());
  for (int c = 0; c < featmaps.channels; ++c) {
    if (mask != nullptr && !mask->retained[c]) continue;
    double acc = 0.0;
    for (const float v : featmaps.channel(c)) acc += v;
    e.values[c] = static_cast<float>(acc * inv);
  }
  return e;
}

Embedding SyntheticBackbone::do_embed(const Tensor3& input, const ChannelMask* mask) const {
  return tail(do_featmaps(input), mask);
}

FeatureMapTensor SyntheticBackbone::do_pullback(const Tensor3& input, std::span<const double> grad) const {
  const auto hw = output_hw(input.height, input.width);
  Tensor3 g(config_.layers.back().out_channels, hw[0], hw[1]);
  const double inv = 1.0 / static_cast<double>(g.plane());
  for (int c = 0; c < g.channels; ++c) {
    std::fill(g.channel(c).begin(), g.channel(c).end(), static_cast<float>(grad[c] * inv));
  }
  return g;
}

}  // namespace authaudit
