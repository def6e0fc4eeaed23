#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace authaudit {

// Interleaved 8-bit RGB image, row-major.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0) {
    if (h < 1 || w < 1) throw std::invalid_argument("Image: dimensions must be >= 1");
  }

  std::uint8_t& at(int y, int x, int c) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  const std::uint8_t& at(int y, int x, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const Image&) const = default;
};

// Dense C x H x W float tensor (network inputs, feature maps, their gradients).
struct Tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Tensor3() = default;
  Tensor3(int c, int h, int w)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0f) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  const float& at(int c, int y, int x) const {
    return data[c * plane() + static_cast<std::size_t>(y) * width + x];
  }
  std::span<float> channel(int c) { return {data.data() + c * plane(), plane()}; }
  std::span<const float> channel(int c) const { return {data.data() + c * plane(), plane()}; }
  bool same_shape(const Tensor3& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool operator==(const Tensor3&) const = default;
};

inline constexpr int kInputSize = 224;
inline constexpr int kResizeShorter = 256;
inline constexpr std::array<double, 3> kImagenetMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImagenetStd{0.229, 0.224, 0.225};

// Bilinear resize with half-pixel centres.
Image resize_bilinear(const Image& image, int height, int width);

// Resize the shorter side to 256 and centre-crop 224x224. An image that is
// already exactly 224x224 is treated as a model-ready crop and returned as is.
Image resize_center_crop(const Image& image);

// (x/255 - mean_c) / std_c per channel; output is 3 x H x W.
Tensor3 normalize(const Image& image);

// resize_center_crop followed by normalize.
Tensor3 preprocess(const Image& image);

// Inverse of normalize, rounded and clamped to 8 bits.
Image denormalize(const Tensor3& tensor);

// Bilinear resampling of a single-channel grid (half-pixel centres).
std::vector<double> upsample_bilinear(std::span<const double> grid, int height, int width,
                                      int out_height, int out_width);

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes);

// Binary PPM (P6) is accepted as an alternative dataset image format.
Image read_image(const std::filesystem::path& path);

}  // namespace authaudit
