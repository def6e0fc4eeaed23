#include "authaudit/consist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace authaudit::consist {

std::vector<std::size_t> top_set(std::span<const double> map, double delta, bool absolute) {
  if (map.empty()) throw std::invalid_argument("top_set: empty map");
  if (!(delta > 0.0) || delta > 100.0) throw std::invalid_argument("top_set: delta must be in (0, 100]");
  const std::size_t n = map.size();
  const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(delta * n / 100.0)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto key = [&](std::size_t i) { return absolute ? std::abs(map[i]) : map[i]; };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](std::size_t a, std::size_t b) {
    const double ka = key(a), kb = key(b);
    return ka != kb ? ka > kb : a < b;
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double iou(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::size_t inter = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

WithinRecord within_consistency(const std::vector<Map>& maps, const ConsistOptions& options) {
  if (maps.size() < 2) throw std::invalid_argument("within_consistency: need at least two maps");
  for (const auto& m : maps) {
    if (m.size() != maps[0].size()) throw std::invalid_argument("within_consistency: maps on different grids");
  }
  std::vector<std::vector<std::vector<std::size_t>>> sets(options.deltas.size());
  for (std::size_t d = 0; d < options.deltas.size(); ++d) {
    for (const auto& m : maps) sets[d].push_back(top_set(m, options.deltas[d], options.absolute));
  }
  WithinRecord rec;
  rec.iou.assign(options.deltas.size(), 0.0);
  double rsum = 0.0;
  std::size_t rcount = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    for (std::size_t j = i + 1; j < maps.size(); ++j) {
      ++rec.pairs;
      if (const auto r = stats::pearson(maps[i], maps[j])) {
        rsum += *r;
        ++rcount;
      } else {
        ++rec.missing_pairs;
      }
      for (std::size_t d = 0; d < options.deltas.size(); ++d) rec.iou[d] += iou(sets[d][i], sets[d][j]);
    }
  }
  for (auto& v : rec.iou) v /= static_cast<double>(rec.pairs);
  if (rcount > 0) rec.mean_r = rsum / static_cast<double>(rcount);
  return rec;
}

Map prototype(const std::vector<Map>& maps) {
  if (maps.empty()) throw std::invalid_argument("prototype: no maps");
  Map out(maps[0].size(), 0.0);
  for (const auto& m : maps) {
    if (m.size() != out.size()) throw std::invalid_argument("prototype: maps on different grids");
    for (std::size_t i = 0; i < m.size(); ++i) out[i] += m[i];
  }
  for (auto& v : out) v /= static_cast<double>(maps.size());
  return out;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (s.n == 0) return s;
  s.mean = stats::mean(values);
  s.sd = s.n > 1 ? std::sqrt(stats::variance(values)) : 0.0;
  return s;
}

AcrossMatrix across_consistency(const std::vector<std::vector<Map>>& protos, bool rank_based) {
  const std::size_t a = protos.size();
  if (a == 0) throw std::invalid_argument("across_consistency: no architectures");
  for (const auto& p : protos) {
    if (p.size() != protos[0].size()) throw std::invalid_argument("across_consistency: image counts differ");
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i].size() != protos[0][i].size()) throw std::invalid_argument("across_consistency: grid mismatch");
    }
  }
  AcrossMatrix m;
  m.rank_based = rank_based;
  m.mean.assign(a, std::vector<double>(a, 0.0));
  m.sd.assign(a, std::vector<double>(a, 0.0));
  m.n.assign(a, std::vector<std::size_t>(a, protos[0].size()));
  for (std::size_t i = 0; i < a; ++i) {
    m.mean[i][i] = 1.0;
    for (std::size_t j = i + 1; j < a; ++j) {
      std::vector<double> rs;
      for (std::size_t img = 0; img < protos[i].size(); ++img) {
        const auto r = rank_based ? stats::spearman(protos[i][img], protos[j][img])
                                  : stats::pearson(protos[i][img], protos[j][img]);
        if (r) rs.push_back(*r);
      }
      const Summary s = summarize(rs);
      m.mean[i][j] = m.mean[j][i] = s.mean;
      m.sd[i][j] = m.sd[j][i] = s.sd;
      m.n[i][j] = m.n[j][i] = s.n;
    }
  }
  return m;
}

std::vector<double> rsm_upper(const std::vector<std::vector<double>>& vectors) {
  std::vector<double> norms;
  for (const auto& v : vectors) {
    const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (!(n > 0.0)) throw std::domain_error("rsm_upper: zero vector, cosine undefined");
    norms.push_back(n);
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      if (vectors[i].size() != vectors[j].size()) throw std::invalid_argument("rsm_upper: dimension mismatch");
      out.push_back(std::inner_product(vectors[i].begin(), vectors[i].end(), vectors[j].begin(), 0.0) /
                    (norms[i] * norms[j]));
    }
  }
  return out;
}

RsmSimilarity rsm_similarity(const std::vector<std::vector<std::vector<double>>>& vectors) {
  if (vectors.size() < 2) throw std::invalid_argument("rsm_similarity: need at least two variants");
  const std::size_t images = vectors[0].size();
  RsmSimilarity out;
  for (std::size_t img = 0; img < images; ++img) {
    for (const auto& v : vectors) {
      if (v.size() != images) throw std::invalid_argument("rsm_similarity: image counts differ");
      if (std::all_of(v[img].begin(), v[img].end(), [](double x) { return x == 0.0; })) {
        out.dropped_images.push_back(img);
        break;
      }
    }
  }
  if (images - out.dropped_images.size() < 3) throw std::invalid_argument("rsm_similarity: need at least three images");
  std::vector<std::vector<double>> uppers;
  for (const auto& v : vectors) {
    std::vector<std::vector<double>> kept;
    for (std::size_t img = 0; img < images; ++img) {
      if (!std::binary_search(out.dropped_images.begin(), out.dropped_images.end(), img)) kept.push_back(v[img]);
    }
    uppers.push_back(rsm_upper(kept));
  }
  const auto rel = stats::model_reliability(uppers);
  out.value = rel.value;
  out.pairs = rel.n_pairs;
  return out;
}

double prediction_similarity(const std::vector<std::vector<double>>& predictions) {
  return stats::model_reliability(predictions).value;
}

stats::CorrelationTest relate(std::span<const double> consistency, std::span<const double> covariate) {
  if (consistency.size() != covariate.size() || consistency.size() < 4) {
    throw std::invalid_argument("relate: need equal-length inputs of at least 4 values");
  }
  return stats::pearson_test(consistency, covariate);
}

}  // namespace authaudit::consist
