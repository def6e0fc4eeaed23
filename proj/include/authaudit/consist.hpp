#pragma once

// Agreement between attribution maps: within an architecture (across seeds),
// across architectures (prototype maps), and in representation space.

#include <optional>
#include <span>
#include <vector>

#include "authaudit/stats.hpp"

namespace authaudit::consist {

using Map = std::vector<double>;

struct ConsistOptions {
  std::vector<double> deltas{5.0, 15.0, 25.0};
  // Rank pixels by |value| instead of signed value.
  bool absolute = false;
};

// Indices of the top delta% pixels, largest first by value, ties by lower
// index, returned sorted ascending. Size is max(1, round(delta * n / 100)).
std::vector<std::size_t> top_set(std::span<const double> map, double delta, bool absolute = false);
double iou(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

struct WithinRecord {
  std::optional<double> mean_r;  // missing when every pair involves a constant map
  std::size_t pairs = 0;
  std::size_t missing_pairs = 0;
  std::vector<double> iou;  // one per delta
};

WithinRecord within_consistency(const std::vector<Map>& maps, const ConsistOptions& options = {});

Map prototype(const std::vector<Map>& maps);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};
// Sample SD (zero for fewer than two values).
Summary summarize(std::span<const double> values);

struct AcrossMatrix {
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> sd;
  std::vector<std::vector<std::size_t>> n;
  bool rank_based = true;
};

// protos[arch][image] is a flattened prototype map on a common grid.
AcrossMatrix across_consistency(const std::vector<std::vector<Map>>& protos, bool rank_based = true);

// Upper triangle (row-major, i < j) of the cosine-similarity matrix.
std::vector<double> rsm_upper(const std::vector<std::vector<double>>& vectors);

struct RsmSimilarity {
  double value = 0.0;
  std::size_t pairs = 0;
  std::vector<std::size_t> dropped_images;  // zero vectors in some variant
};

// vectors[variant][image] = penultimate activations.
RsmSimilarity rsm_similarity(const std::vector<std::vector<std::vector<double>>>& vectors);

double prediction_similarity(const std::vector<std::vector<double>>& predictions);

stats::CorrelationTest relate(std::span<const double> consistency, std::span<const double> covariate);

}  // namespace authaudit::consist
