#include "authaudit/explain.hpp"

#include <algorithm>
#include <cmath>

#include "authaudit/binary_io.hpp"

namespace authaudit {

namespace {
constexpr std::uint32_t kMapVersion = 1;
}

const char* method_name(Method m) {
  switch (m) {
    case Method::GradCam: return "gradcam";
    case Method::Mpm: return "mpm";
    case Method::Lime: return "lime";
  }
  return "unknown";
}

AttributionMap upsample(const AttributionMap& map, int height, int width) {
  if (map.height == height && map.width == width) return map;
  AttributionMap out = map;
  out.height = height;
  out.width = width;
  out.values = upsample_bilinear(map.values, map.height, map.width, height, width);
  out.upsampled = true;
  return out;
}

AttributionMap normalize_minmax(const AttributionMap& map) {
  AttributionMap out = map;
  out.normalized = true;
  if (map.values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double min = *lo;
  const double range = *hi - *lo;
  if (!(range > 0.0)) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  for (auto& v : out.values) v = std::clamp(2.0 * (v - min) / range - 1.0, -1.0, 1.0);
  return out;
}

std::vector<std::uint8_t> encode_map(const AttributionMap& map) {
  ByteWriter w;
  w.raw("AMAP");
  w.u32(kMapVersion);
  w.u32(static_cast<std::uint32_t>(map.height));
  w.u32(static_cast<std::uint32_t>(map.width));
  w.u8(static_cast<std::uint8_t>(map.method));
  w.u8(map.normalized ? 1 : 0);
  for (double v : map.values) w.f32(static_cast<float>(v));
  return w.take();
}

AttributionMap decode_map(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != "AMAP") throw FormatError("not an attribution map (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kMapVersion) throw FormatError("unsupported attribution map version " + std::to_string(version));
  const auto h = r.u32();
  const auto w = r.u32();
  const auto method = r.u8();
  if (method > 2) throw FormatError("unknown attribution method tag " + std::to_string(method));
  AttributionMap map(static_cast<int>(h), static_cast<int>(w), static_cast<Method>(method));
  map.normalized = r.u8() != 0;
  for (auto& v : map.values) v = r.f32();
  if (!r.at_end()) throw FormatError("trailing bytes after attribution map payload");
  return map;
}

void save_map(const std::filesystem::path& path, const AttributionMap& map) { write_file(path, encode_map(map)); }

AttributionMap load_map(const std::filesystem::path& path) { return decode_map(read_file(path)); }

Image render_map(const AttributionMap& map) {
  double scale = 1.0;
  if (!map.normalized) {
    double m = 0.0;
    for (double v : map.values) m = std::max(m, std::abs(v));
    scale = m > 0.0 ? 1.0 / m : 1.0;
  }
  Image img(map.height, map.width);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const double v = std::clamp(map.at(y, x) * scale, -1.0, 1.0);
      // Negative: blue -> white; positive: white -> red.
      const double t = 1.0 - std::abs(v);
      const auto fade = static_cast<std::uint8_t>(std::lround(255.0 * t));
      img.at(y, x, 0) = v < 0 ? fade : 255;
      img.at(y, x, 1) = fade;
      img.at(y, x, 2) = v > 0 ? fade : 255;
    }
  }
  return img;
}

Predictor head_predictor(const HeadParams& head, const Oracle& oracle, const ChannelMask* mask) {
  std::optional<ChannelMask> m;
  if (mask) m = *mask;
  return [&head, &oracle, m](const Tensor3& input) {
    return predict(head, oracle.embed(input, m ? &*m : nullptr));
  };
}

}  // namespace authaudit
