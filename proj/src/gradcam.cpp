#include "authaudit/explain.hpp"

namespace authaudit {

GradCamResult gradcam(const HeadParams& head, const Oracle& oracle, const Tensor3& input, const ChannelMask* mask,
                      const FeatureMapTensor* featmaps) {
  const OracleMeta meta = oracle.meta();
  if (head.input_dim() != meta.embed_dim) {
    throw std::invalid_argument("gradcam: head input " + std::to_string(head.input_dim()) + " != embed_dim " +
                                std::to_string(meta.embed_dim));
  }
  check_mask(mask, meta.channels());
  if (mask && mask->count() == 0) throw std::invalid_argument("gradcam: every channel is masked");

  const FeatureMapTensor a = featmaps ? *featmaps : oracle.featmaps(input);
  const Embedding e = featmaps && oracle.has_tail() ? oracle.tail(a, mask) : oracle.embed(input, mask);
  const std::vector<double> g_embed = head_gradient(head, e);
  const FeatureMapTensor g = oracle.pullback(input, g_embed);

  GradCamResult out;
  out.native = AttributionMap(a.height, a.width, Method::GradCam);
  out.alphas.assign(a.channels, 0.0);
  const std::size_t plane = a.plane();
  for (int k = 0; k < a.channels; ++k) {
    if (mask && !mask->retained[k]) continue;
    double s = 0.0;
    for (float v : g.channel(k)) s += v;
    const double alpha = s / static_cast<double>(plane);
    out.alphas[k] = alpha;
    const auto ak = a.channel(k);
    for (std::size_t i = 0; i < plane; ++i) out.native.values[i] += alpha * ak[i];
  }
  out.upsampled = upsample(out.native, input.height, input.width);
  return out;
}

}  // namespace authaudit
