#include "authaudit/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include "authaudit/binary_io.hpp"

namespace authaudit {
namespace {

void require_rgb(const Image& image) {
  if (image.height < 1 || image.width < 1 ||
      image.rgb.size() != static_cast<std::size_t>(image.height) * image.width * 3) {
    throw std::invalid_argument("expected a non-empty 3-channel RGB image");
  }
}

struct Tap {
  int i0;
  int i1;
  double frac;
};

std::vector<Tap> bilinear_taps(int in_size, int out_size) {
  std::vector<Tap> taps(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in_size - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

Image resize_bilinear(const Image& image, int height, int width) {
  require_rgb(image);
  Image out(height, width);
  const auto ty = bilinear_taps(image.height, height);
  const auto tx = bilinear_taps(image.width, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(ty[y].i0, tx[x].i0, c) * (1.0 - tx[x].frac) +
                           image.at(ty[y].i0, tx[x].i1, c) * tx[x].frac;
        const double bottom = image.at(ty[y].i1, tx[x].i0, c) * (1.0 - tx[x].frac) +
                              image.at(ty[y].i1, tx[x].i1, c) * tx[x].frac;
        const double v = top * (1.0 - ty[y].frac) + bottom * ty[y].frac;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

Image resize_center_crop(const Image& image) {
  require_rgb(image);
  if (image.height == kInputSize && image.width == kInputSize) return image;
  int h = kResizeShorter;
  int w = kResizeShorter;
  if (image.height <= image.width) {
    w = static_cast<int>(static_cast<long long>(kResizeShorter) * image.width / image.height);
  } else {
    h = static_cast<int>(static_cast<long long>(kResizeShorter) * image.height / image.width);
  }
  const Image resized = resize_bilinear(image, h, w);
  const int top = static_cast<int>(std::lround((h - kInputSize) / 2.0));
  const int left = static_cast<int>(std::lround((w - kInputSize) / 2.0));
  Image out(kInputSize, kInputSize);
  for (int y = 0; y < kInputSize; ++y) {
    std::memcpy(&out.at(y, 0, 0), &resized.at(y + top, left, 0), kInputSize * 3);
  }
  return out;
}

Tensor3 normalize(const Image& image) {
  require_rgb(image);
  Tensor3 t(3, image.height, image.width);
  for (int c = 0; c < 3; ++c) {
    const double mean = kImagenetMean[c];
    const double sd = kImagenetStd[c];
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        t.at(c, y, x) = static_cast<float>((image.at(y, x, c) / 255.0 - mean) / sd);
      }
    }
  }
  return t;
}

Tensor3 preprocess(const Image& image) { return normalize(resize_center_crop(image)); }

Image denormalize(const Tensor3& tensor) {
  if (tensor.channels != 3) throw std::invalid_argument("denormalize: expected 3 channels");
  Image out(tensor.height, tensor.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < tensor.height; ++y) {
      for (int x = 0; x < tensor.width; ++x) {
        const double v = (tensor.at(c, y, x) * kImagenetStd[c] + kImagenetMean[c]) * 255.0;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

std::vector<double> upsample_bilinear(std::span<const double> grid, int height, int width,
                                      int out_height, int out_width) {
  if (grid.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("upsample_bilinear: grid size mismatch");
  }
  std::vector<double> out(static_cast<std::size_t>(out_height) * out_width);
  const auto ty = bilinear_taps(height, out_height);
  const auto tx = bilinear_taps(width, out_width);
  for (int y = 0; y < out_height; ++y) {
    const double* r0 = grid.data() + static_cast<std::size_t>(ty[y].i0) * width;
    const double* r1 = grid.data() + static_cast<std::size_t>(ty[y].i1) * width;
    for (int x = 0; x < out_width; ++x) {
      const double top = r0[tx[x].i0] * (1.0 - tx[x].frac) + r0[tx[x].i1] * tx[x].frac;
      const double bottom = r1[tx[x].i0] * (1.0 - tx[x].frac) + r1[tx[x].i1] * tx[x].frac;
      out[static_cast<std::size_t>(y) * out_width + x] = top * (1.0 - ty[y].frac) + bottom * ty[y].frac;
    }
  }
  return out;
}

// --- PNG -------------------------------------------------------------------

namespace {

struct MemoryReader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (src->pos + n > src->bytes.size()) png_error(png, "truncated PNG");
  std::memcpy(out, src->bytes.data() + src->pos, n);
  src->pos += n;
}

void write_callback(png_structp png, png_bytep data, png_size_t n) {
  auto* dst = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  dst->insert(dst->end(), data, data + n);
}

void flush_callback(png_structp) {}

[[noreturn]] void png_error_callback(png_structp, png_const_charp message) {
  throw FormatError(std::string("PNG: ") + message);
}

void png_warning_callback(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
  require_rgb(image);
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_callback,
                                            png_warning_callback);
  png_infop info = png_create_info_struct(png);
  try {
    png_set_write_fn(png, &out, write_callback, flush_callback);
    png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(&image.rgb[static_cast<std::size_t>(y) * image.width * 3]));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_callback,
                                           png_warning_callback);
  png_infop info = png_create_info_struct(png);
  MemoryReader src{bytes, 0};
  Image image;
  try {
    png_set_read_fn(png, &src, read_callback);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    if ((color & PNG_COLOR_MASK_COLOR) == 0) throw std::invalid_argument("PNG is not an RGB image");
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    image = Image(static_cast<int>(png_get_image_height(png, info)),
                  static_cast<int>(png_get_image_width(png, info)));
    for (int y = 0; y < image.height; ++y) {
      png_read_row(png, &image.rgb[static_cast<std::size_t>(y) * image.width * 3], nullptr);
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

Image read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

void write_png(const std::filesystem::path& path, const Image& image) {
  write_file(path, encode_png(image));
}

Image read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
    std::size_t pos = 2;
    auto next_int = [&]() {
      while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
          while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(bytes[pos])) {
          ++pos;
        } else {
          break;
        }
      }
      int v = 0;
      bool any = false;
      while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        v = v * 10 + (bytes[pos++] - '0');
        any = true;
      }
      if (!any) throw FormatError("malformed PPM header: " + path.string());
      return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw FormatError("only 8-bit PPM is supported: " + path.string());
    ++pos;
    Image image(h, w);
    if (bytes.size() < pos + image.rgb.size()) throw FormatError("truncated PPM: " + path.string());
    std::memcpy(image.rgb.data(), bytes.data() + pos, image.rgb.size());
    return image;
  }
  return decode_png(bytes);
}

}  // namespace authaudit
