#pragma once

// Attribution maps for a scalar predictor: regression Grad-CAM, multiscale
// pixel masking (MPM) and superpixel LIME. Positive values mark evidence that
// raises the predicted authenticity.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "authaudit/head.hpp"
#include "authaudit/image.hpp"
#include "authaudit/oracle.hpp"

namespace authaudit {

enum class Method : std::uint8_t { GradCam = 0, Mpm = 1, Lime = 2 };
const char* method_name(Method m);

struct AttributionMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  Method method = Method::GradCam;
  bool upsampled = false;
  bool normalized = false;

  AttributionMap() = default;
  AttributionMap(int h, int w, Method m) : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0.0), method(m) {}
  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Bilinear resize to height x width (no-op copy when already that size).
AttributionMap upsample(const AttributionMap& map, int height, int width);
// Affine [min, max] -> [-1, 1]; a constant map becomes all zeros.
AttributionMap normalize_minmax(const AttributionMap& map);

// "AMAP" | u32 version | u32 H | u32 W | u8 method | u8 normalized | f32 payload.
std::vector<std::uint8_t> encode_map(const AttributionMap& map);
AttributionMap decode_map(std::span<const std::uint8_t> bytes);
void save_map(const std::filesystem::path& path, const AttributionMap& map);
AttributionMap load_map(const std::filesystem::path& path);
// Diverging blue-white-red rendering over [-1, 1]. Maps that are not already
// normalized are divided by their largest absolute value first.
Image render_map(const AttributionMap& map);

// Scalar predictor over a preprocessed input. Must tolerate concurrent calls.
using Predictor = std::function<double(const Tensor3&)>;

Predictor head_predictor(const HeadParams& head, const Oracle& oracle, const ChannelMask* mask = nullptr);

// --- Grad-CAM ----------------------------------------------------------------

struct GradCamResult {
  AttributionMap native;
  AttributionMap upsampled;
  std::vector<double> alphas;  // per channel, zero for ablated channels
};

// `featmaps`, when given, must be oracle.featmaps(input) (e.g. from a cache);
// with a tail-capable backend the masked embedding is then derived from it.
GradCamResult gradcam(const HeadParams& head, const Oracle& oracle, const Tensor3& input,
                      const ChannelMask* mask = nullptr, const FeatureMapTensor* featmaps = nullptr);

// --- Multiscale pixel masking --------------------------------------------------

struct MpmOptions {
  std::vector<int> scales{3, 17, 65};
  int stride = 1;
  int jobs = 1;
};

struct MpmResult {
  AttributionMap raw;
  AttributionMap normalized;
  double base_prediction = 0.0;
};

// Zero every channel inside an s x s patch centred at (y, x), clipped at the borders.
void zero_patch(Tensor3& t, int y, int x, int scale);
MpmResult mpm(const Predictor& predictor, const Tensor3& input, const MpmOptions& options = {});

// --- SLIC superpixels ------------------------------------------------------------

struct SegmentLabels {
  int height = 0;
  int width = 0;
  int k = 0;
  std::vector<int> labels;

  int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

struct SlicOptions {
  int k_max = 150;
  double compactness = 10.0;
  int iterations = 10;
};

// sRGB (D65) to CIELAB, as three planes.
std::array<std::vector<double>, 3> rgb_to_lab(const Image& image);
SegmentLabels slic(const Image& image, const SlicOptions& options = {});
// True if every label in [0, k) is used and forms one 4-connected region.
bool segments_valid(const SegmentLabels& seg);

// --- LIME --------------------------------------------------------------------------

struct LimeOptions {
  int samples = 1200;
  double keep_p = 0.7;
  double kernel_width = 0.25;
  double ridge_lambda = 1.0;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct LimeResult {
  std::vector<double> betas;
  double intercept = 0.0;
  // Missing when the predictor outputs have zero weighted variance.
  std::optional<double> fidelity_r2;
  LimeOptions config;
  double full_prediction = 0.0;
};

struct LimeSamples {
  std::vector<std::vector<std::uint8_t>> z;  // samples x K
  std::vector<double> outputs;
};

// Draws the perturbation vectors and queries the predictor on pixel-space
// perturbations of a 224 x 224 image.
LimeSamples lime_sample(const Predictor& predictor, const Image& image, const SegmentLabels& segments,
                        const LimeOptions& options);
// Weighted ridge fit of outputs - full_prediction on z with an unpenalised intercept.
LimeResult lime_fit(const LimeSamples& samples, double full_prediction, const LimeOptions& options);
LimeResult lime_explain(const Predictor& predictor, const Image& image, const SegmentLabels& segments,
                        const LimeOptions& options = {});
AttributionMap beta_to_map(const LimeResult& result, const SegmentLabels& segments);

}  // namespace authaudit
