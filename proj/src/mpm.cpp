#include "authaudit/explain.hpp"

#include <algorithm>

#include "authaudit/parallel.hpp"

namespace authaudit {

void zero_patch(Tensor3& t, int y, int x, int scale) {
  const int r = scale / 2;
  const int y0 = std::max(0, y - r), y1 = std::min(t.height - 1, y + r);
  const int x0 = std::max(0, x - r), x1 = std::min(t.width - 1, x + r);
  for (int c = 0; c < t.channels; ++c) {
    for (int yy = y0; yy <= y1; ++yy) {
      std::fill(&t.at(c, yy, x0), &t.at(c, yy, x1) + 1, 0.0f);
    }
  }
}

namespace {

void restore_patch(Tensor3& t, const Tensor3& src, int y, int x, int scale) {
  const int r = scale / 2;
  const int y0 = std::max(0, y - r), y1 = std::min(t.height - 1, y + r);
  const int x0 = std::max(0, x - r), x1 = std::min(t.width - 1, x + r);
  for (int c = 0; c < t.channels; ++c) {
    for (int yy = y0; yy <= y1; ++yy) {
      std::copy(&src.at(c, yy, x0), &src.at(c, yy, x1) + 1, &t.at(c, yy, x0));
    }
  }
}

int nearest_evaluated(int v, int stride, int last_index) {
  return std::min((v + stride / 2) / stride, last_index);
}

}  // namespace

MpmResult mpm(const Predictor& predictor, const Tensor3& input, const MpmOptions& options) {
  if (options.scales.empty()) throw std::invalid_argument("mpm: no scales");
  for (int s : options.scales) {
    if (s < 1 || s % 2 == 0) throw std::invalid_argument("mpm: scales must be odd and positive");
  }
  if (options.stride < 1) throw std::invalid_argument("mpm: stride must be >= 1");

  const int h = input.height;
  const int w = input.width;
  const int stride = options.stride;
  const int ny = (h - 1) / stride + 1;
  const int nx = (w - 1) / stride + 1;
  const std::size_t positions = static_cast<std::size_t>(ny) * nx;

  MpmResult out;
  out.base_prediction = predictor(input);
  const double n_scales = static_cast<double>(options.scales.size());

  // Contiguous chunks of positions, each with its own scratch copy of the input.
  std::vector<double> scores(positions, 0.0);
  const std::size_t chunks = std::min<std::size_t>(positions, static_cast<std::size_t>(std::max(1, options.jobs)) * 4);
  parallel_for(chunks, options.jobs, [&](std::size_t chunk) {
    const std::size_t begin = positions * chunk / chunks;
    const std::size_t end = positions * (chunk + 1) / chunks;
    Tensor3 scratch = input;
    for (std::size_t p = begin; p < end; ++p) {
      const int y = static_cast<int>(p / nx) * stride;
      const int x = static_cast<int>(p % nx) * stride;
      double acc = 0.0;
      for (int s : options.scales) {
        zero_patch(scratch, y, x, s);
        acc += out.base_prediction - predictor(scratch);
        restore_patch(scratch, input, y, x, s);
      }
      scores[p] = acc / n_scales;
    }
  });

  out.raw = AttributionMap(h, w, Method::Mpm);
  for (int y = 0; y < h; ++y) {
    const int ey = nearest_evaluated(y, stride, ny - 1);
    for (int x = 0; x < w; ++x) {
      out.raw.at(y, x) = scores[static_cast<std::size_t>(ey) * nx + nearest_evaluated(x, stride, nx - 1)];
    }
  }
  out.normalized = normalize_minmax(out.raw);
  return out;
}

}  // namespace authaudit
