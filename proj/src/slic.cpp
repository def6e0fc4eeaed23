#include "authaudit/explain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace authaudit {

std::array<std::vector<double>, 3> rgb_to_lab(const Image& image) {
  const std::size_t n = static_cast<std::size_t>(image.height) * image.width;
  std::array<std::vector<double>, 3> lab{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  auto linear = [](double c) { return c > 0.04045 ? std::pow((c + 0.055) / 1.055, 2.4) : c / 12.92; };
  auto f = [](double t) { return t > 0.008856 ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0; };
  for (std::size_t i = 0; i < n; ++i) {
    const double r = linear(image.rgb[3 * i] / 255.0);
    const double g = linear(image.rgb[3 * i + 1] / 255.0);
    const double b = linear(image.rgb[3 * i + 2] / 255.0);
    const double x = (0.412453 * r + 0.357580 * g + 0.180423 * b) / 0.95047;
    const double y = 0.212671 * r + 0.715160 * g + 0.072169 * b;
    const double z = (0.019334 * r + 0.119193 * g + 0.950227 * b) / 1.08883;
    const double fx = f(x), fy = f(y), fz = f(z);
    lab[0][i] = 116.0 * fy - 16.0;
    lab[1][i] = 500.0 * (fx - fy);
    lab[2][i] = 200.0 * (fy - fz);
  }
  return lab;
}

namespace {

// 4-connected components of a label grid; returns component id per pixel.
std::vector<int> components(const std::vector<int>& labels, int h, int w, std::vector<int>& comp_label,
                            std::vector<std::size_t>& comp_size) {
  const std::size_t n = labels.size();
  std::vector<int> comp(n, -1);
  std::vector<std::size_t> stack;
  comp_label.clear();
  comp_size.clear();
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(comp_label.size());
    const int lab = labels[start];
    comp_label.push_back(lab);
    comp_size.push_back(0);
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++comp_size[id];
      const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
      const std::size_t nb[4] = {p - w, p + w, p - 1, p + 1};
      const bool ok[4] = {y > 0, y + 1 < h, x > 0, x + 1 < w};
      for (int k = 0; k < 4; ++k) {
        if (ok[k] && comp[nb[k]] < 0 && labels[nb[k]] == lab) {
          comp[nb[k]] = id;
          stack.push_back(nb[k]);
        }
      }
    }
  }
  return comp;
}

struct UnionFind {
  std::vector<int> parent;
  std::vector<std::size_t> size;
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
};

// Every label keeps its largest component; the other fragments are merged,
// smallest first, into the largest adjacent region.
std::vector<int> enforce_connectivity(const std::vector<int>& labels, int h, int w) {
  std::vector<int> comp_label;
  std::vector<std::size_t> comp_size;
  const std::vector<int> comp = components(labels, h, w, comp_label, comp_size);
  const int nc = static_cast<int>(comp_label.size());

  std::vector<int> keeper(*std::max_element(labels.begin(), labels.end()) + 1, -1);
  for (int c = 0; c < nc; ++c) {
    int& k = keeper[comp_label[c]];
    if (k < 0 || comp_size[c] > comp_size[k]) k = c;
  }
  std::vector<std::vector<int>> adjacent(nc);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w && comp[p] != comp[p + 1]) {
        adjacent[comp[p]].push_back(comp[p + 1]);
        adjacent[comp[p + 1]].push_back(comp[p]);
      }
      if (y + 1 < h && comp[p] != comp[p + w]) {
        adjacent[comp[p]].push_back(comp[p + w]);
        adjacent[comp[p + w]].push_back(comp[p]);
      }
    }
  }
  std::vector<int> orphans;
  for (int c = 0; c < nc; ++c) {
    if (keeper[comp_label[c]] != c) orphans.push_back(c);
  }
  std::stable_sort(orphans.begin(), orphans.end(), [&](int a, int b) { return comp_size[a] < comp_size[b]; });

  UnionFind uf{std::vector<int>(nc), comp_size};
  std::iota(uf.parent.begin(), uf.parent.end(), 0);
  for (int o : orphans) {
    const int root = uf.find(o);
    int best = -1;
    for (int nb : adjacent[o]) {
      const int r = uf.find(nb);
      if (r == root) continue;
      if (best < 0 || uf.size[r] > uf.size[best] || (uf.size[r] == uf.size[best] && r < best)) best = r;
    }
    if (best < 0) continue;
    uf.parent[root] = best;
    uf.size[best] += uf.size[root];
  }

  std::vector<int> out(labels.size());
  for (std::size_t p = 0; p < labels.size(); ++p) out[p] = comp_label[uf.find(comp[p])];
  return out;
}

}  // namespace

SegmentLabels slic(const Image& image, const SlicOptions& options) {
  if (options.k_max < 1 || options.iterations < 0 || !(options.compactness > 0.0)) {
    throw std::invalid_argument("slic: invalid options");
  }
  const int h = image.height, w = image.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const auto lab = rgb_to_lab(image);

  const int gy = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(options.k_max) * h / w))));
  const int gx = std::max(1, options.k_max / gy);
  const double step = std::sqrt(static_cast<double>(n) / (gx * gy));
  const double spatial = options.compactness / step;

  struct Center {
    double l, a, b, y, x;
  };
  std::vector<Center> centers;
  for (int j = 0; j < gy; ++j) {
    for (int i = 0; i < gx; ++i) {
      const double cy = (j + 0.5) * h / gy, cx = (i + 0.5) * w / gx;
      const std::size_t p = static_cast<std::size_t>(std::min(h - 1, static_cast<int>(cy))) * w +
                            std::min(w - 1, static_cast<int>(cx));
      centers.push_back({lab[0][p], lab[1][p], lab[2][p], cy, cx});
    }
  }

  std::vector<int> labels(n, -1);
  std::vector<double> dist(n);
  auto distance = [&](const Center& c, std::size_t p, int y, int x) {
    const double dl = lab[0][p] - c.l, da = lab[1][p] - c.a, db = lab[2][p] - c.b;
    const double dy = y - c.y, dx = x - c.x;
    return dl * dl + da * da + db * db + (dy * dy + dx * dx) * spatial * spatial;
  };
  const int iterations = std::max(1, options.iterations);
  for (int it = 0; it < iterations; ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const Center& c = centers[k];
      const int y0 = std::max(0, static_cast<int>(std::floor(c.y - step)));
      const int y1 = std::min(h - 1, static_cast<int>(std::ceil(c.y + step)));
      const int x0 = std::max(0, static_cast<int>(std::floor(c.x - step)));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(c.x + step)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          const double d = distance(c, p, y, x);
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = static_cast<int>(k);
          }
        }
      }
    }
    // Pixels outside every search window go to the nearest centre overall.
    for (std::size_t p = 0; p < n; ++p) {
      if (labels[p] >= 0 && std::isfinite(dist[p])) continue;
      const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
      for (std::size_t k = 0; k < centers.size(); ++k) {
        const double d = distance(centers[k], p, y, x);
        if (d < dist[p]) {
          dist[p] = d;
          labels[p] = static_cast<int>(k);
        }
      }
    }
    std::vector<Center> sums(centers.size(), {0, 0, 0, 0, 0});
    std::vector<std::size_t> counts(centers.size(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      auto& s = sums[labels[p]];
      s.l += lab[0][p];
      s.a += lab[1][p];
      s.b += lab[2][p];
      s.y += static_cast<double>(p / w);
      s.x += static_cast<double>(p % w);
      ++counts[labels[p]];
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (counts[k] == 0) continue;
      const double c = static_cast<double>(counts[k]);
      centers[k] = {sums[k].l / c, sums[k].a / c, sums[k].b / c, sums[k].y / c, sums[k].x / c};
    }
  }

  labels = enforce_connectivity(labels, h, w);
  SegmentLabels seg{h, w, 0, std::vector<int>(n)};
  std::vector<int> remap(centers.size(), -1);
  for (std::size_t p = 0; p < n; ++p) {
    int& r = remap[labels[p]];
    if (r < 0) r = seg.k++;
    seg.labels[p] = r;
  }
  return seg;
}

bool segments_valid(const SegmentLabels& seg) {
  if (seg.k < 1 || seg.labels.size() != static_cast<std::size_t>(seg.height) * seg.width) return false;
  for (int v : seg.labels) {
    if (v < 0 || v >= seg.k) return false;
  }
  std::vector<int> comp_label;
  std::vector<std::size_t> comp_size;
  components(seg.labels, seg.height, seg.width, comp_label, comp_size);
  if (comp_label.size() != static_cast<std::size_t>(seg.k)) return false;
  std::vector<bool> seen(seg.k, false);
  for (int l : comp_label) {
    if (seen[l]) return false;
    seen[l] = true;
  }
  return true;
}

}  // namespace authaudit
