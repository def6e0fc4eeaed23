#include "authaudit/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "authaudit/kernels.hpp"
#include "authaudit/rng.hpp"

namespace authaudit::stats {
namespace {

void require_same_length(std::span<const double> x, std::span<const double> y, std::size_t min_n,
                         const char* what) {
  if (x.size() != y.size()) throw std::invalid_argument(std::string(what) + ": length mismatch");
  if (x.size() < min_n) {
    throw std::invalid_argument(std::string(what) + ": need at least " + std::to_string(min_n) +
                                " values");
  }
}

}  // namespace

double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean of empty range");
  return kernels::active().sum_f64(x.data(), x.size()) / static_cast<double>(x.size());
}

double variance(std::span<const double> x, int ddof) {
  if (x.size() <= static_cast<std::size_t>(ddof)) throw std::invalid_argument("variance: too few values");
  const double m = mean(x);
  const auto mom = kernels::active().centered_moments_f64(x.data(), x.data(), x.size(), m, m);
  return mom.sxx / static_cast<double>(x.size() - ddof);
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y, 2, "pearson");
  const auto& k = kernels::active();
  const double mx = k.sum_f64(x.data(), x.size()) / static_cast<double>(x.size());
  const double my = k.sum_f64(y.data(), y.size()) / static_cast<double>(y.size());
  const auto m = k.centered_moments_f64(x.data(), y.data(), x.size(), mx, my);
  if (!(m.sxx > 0.0) || !(m.syy > 0.0)) return std::nullopt;
  const double r = m.sxy / std::sqrt(m.sxx * m.syy);
  return std::clamp(r, -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y, 2, "spearman");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double spearman_brown(double r) { return 2.0 * r / (1.0 + r); }

double fisher_z_mean(std::span<const double> rs) {
  if (rs.empty()) throw std::invalid_argument("fisher_z_mean: no correlations");
  if (std::all_of(rs.begin(), rs.end(), [&](double r) { return r == rs.front(); })) return rs.front();
  double acc = 0.0;
  for (const double r : rs) acc += std::atanh(r);
  return std::tanh(acc / static_cast<double>(rs.size()));
}

ReliabilityReport split_half_reliability(const Matrix& z, const SplitHalfOptions& options) {
  const std::size_t items = z.rows;
  const std::size_t participants = z.cols;
  if (participants < 2) throw std::invalid_argument("split_half_reliability: need >= 2 participants");
  if (items < 3) throw std::invalid_argument("split_half_reliability: need >= 3 items");
  const std::size_t first = options.first_group == 0 ? participants / 2 : options.first_group;
  if (first < 1 || first >= participants) throw std::invalid_argument("split_half_reliability: bad group size");

  ReliabilityReport report;
  Pcg32 rng(options.seed);
  std::vector<std::size_t> roster(participants);
  std::vector<double> mean_a(items);
  std::vector<double> mean_b(items);
  std::vector<double> rs;
  for (std::size_t s = 0; s < options.n_resamples; ++s) {
    std::iota(roster.begin(), roster.end(), 0);
    rng.shuffle(std::span(roster));
    for (std::size_t i = 0; i < items; ++i) {
      double a = 0.0;
      double b = 0.0;
      for (std::size_t p = 0; p < first; ++p) a += z(i, roster[p]);
      for (std::size_t p = first; p < participants; ++p) b += z(i, roster[p]);
      mean_a[i] = a / static_cast<double>(first);
      mean_b[i] = b / static_cast<double>(participants - first);
    }
    const auto r = pearson(mean_a, mean_b);
    if (!r) {
      ++report.n_skipped;
      report.warnings.push_back("resample " + std::to_string(s) + ": constant item means, skipped");
      continue;
    }
    rs.push_back(*r);
  }
  if (rs.empty()) throw std::domain_error("split_half_reliability: every resample was degenerate");
  report.n_resamples = rs.size();
  report.split_half_r = fisher_z_mean(rs);
  report.spearman_brown_r = spearman_brown(report.split_half_r);
  report.noise_ceiling = std::sqrt(std::max(report.spearman_brown_r, 0.0));
  return report;
}

ModelReliability model_reliability(const std::vector<std::vector<double>>& predictions) {
  if (predictions.size() < 2) throw std::invalid_argument("model_reliability: need >= 2 vectors");
  const std::size_t n = predictions.front().size();
  if (n < 3) throw std::invalid_argument("model_reliability: vectors need length >= 3");
  for (const auto& p : predictions) {
    if (p.size() != n) throw std::invalid_argument("model_reliability: length mismatch");
  }
  ModelReliability out;
  std::vector<bool> constant(predictions.size(), false);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    if (std::all_of(p.begin(), p.end(), [&](double v) { return v == p.front(); })) {
      constant[i] = true;
      out.constant_vectors.push_back(i);
    }
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (std::size_t j = i + 1; j < predictions.size(); ++j) {
      if (constant[i] || constant[j]) continue;
      const auto r = pearson(predictions[i], predictions[j]);
      if (!r) continue;
      acc += *r;
      ++out.n_pairs;
    }
  }
  if (out.n_pairs == 0) throw std::domain_error("model_reliability: no valid pairs");
  out.value = acc / static_cast<double>(out.n_pairs);
  return out;
}

double plcc_ceiling(double r_human, double r_model) {
  if (r_human < 0.0 || r_model < 0.0 || r_human > 1.0 || r_model > 1.0) {
    throw std::invalid_argument("plcc_ceiling: inputs must lie in [0, 1]");
  }
  return std::sqrt(r_human * r_model);
}

double partial_correlation(std::span<const double> a, std::span<const double> a_hat,
                           std::span<const double> q) {
  require_same_length(a, a_hat, 4, "partial_correlation");
  require_same_length(a, q, 4, "partial_correlation");
  const auto r_ah = pearson(a, a_hat);
  const auto r_aq = pearson(a, q);
  const auto r_hq = pearson(a_hat, q);
  if (!r_ah || !r_aq || !r_hq) throw std::domain_error("partial_correlation: constant input");
  const double denom = (1.0 - *r_aq * *r_aq) * (1.0 - *r_hq * *r_hq);
  if (!(denom > 0.0)) throw std::domain_error("partial_correlation: |r| with the control equals 1");
  return (*r_ah - *r_aq * *r_hq) / std::sqrt(denom);
}

MetricBundle metrics(std::span<const double> pred, std::span<const double> target) {
  require_same_length(pred, target, 2, "metrics");
  MetricBundle m;
  double se = 0.0;
  double ae = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    se += d * d;
    ae += std::abs(d);
  }
  const auto n = static_cast<double>(pred.size());
  m.rmse = std::sqrt(se / n);
  m.mae = ae / n;
  m.plcc = pearson(pred, target);
  m.srcc = spearman(pred, target);
  return m;
}

// --- Gaussian mixtures -------------------------------------------------------

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_normal_pdf(double x, double mu, double var) {
  const double d = x - mu;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (const double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

GaussianMixture run_em(std::span<const double> x, GaussianMixture g, const GmmOptions& options,
                       double var_floor) {
  const std::size_t k = g.means.size();
  const std::size_t n = x.size();
  std::vector<double> resp(n * k);
  std::vector<double> logp(k);
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.max_iterations; ++it) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        logp[c] = std::log(g.weights[c]) + log_normal_pdf(x[i], g.means[c], g.variances[c]);
      }
      const double lse = log_sum_exp(logp);
      ll += lse;
      for (std::size_t c = 0; c < k; ++c) resp[i * k + c] = std::exp(logp[c] - lse);
    }
    g.log_likelihood = ll;
    if (std::abs(ll - prev) < options.tolerance) {
      g.converged = true;
      return g;
    }
    prev = ll;
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0;
      double sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * k + c];
        sx += resp[i * k + c] * x[i];
      }
      nk = std::max(nk, 1e-12);
      const double mu = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - mu;
        sv += resp[i * k + c] * d * d;
      }
      g.weights[c] = nk / static_cast<double>(n);
      g.means[c] = mu;
      g.variances[c] = std::max(sv / nk, var_floor);
    }
  }
  return g;
}

}  // namespace

GaussianMixture fit_gmm(std::span<const double> x, int components, const GmmOptions& options) {
  if (components < 1) throw std::invalid_argument("fit_gmm: components must be >= 1");
  if (x.size() < static_cast<std::size_t>(components) * 2) throw std::invalid_argument("fit_gmm: too few values");
  const double total_var = variance(x, 0);
  if (!(total_var > 0.0)) throw std::domain_error("fit_gmm: constant data");
  const double var_floor = 1e-6 * total_var;
  const auto n = x.size();

  if (components == 1) {
    GaussianMixture g{{1.0}, {mean(x)}, {total_var}, 0.0, true};
    for (const double v : x) g.log_likelihood += log_normal_pdf(v, g.means[0], g.variances[0]);
    return g;
  }

  Pcg32 rng(options.seed);
  GaussianMixture best;
  best.log_likelihood = -std::numeric_limits<double>::infinity();
  std::vector<double> d2(n);
  for (int restart = 0; restart < options.restarts; ++restart) {
    // k-means++ seeding of the component means.
    std::vector<double> centers{x[rng.bounded(static_cast<std::uint32_t>(n))]};
    while (centers.size() < static_cast<std::size_t>(components)) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double best_d = std::numeric_limits<double>::infinity();
        for (const double c : centers) best_d = std::min(best_d, (x[i] - c) * (x[i] - c));
        d2[i] = best_d;
        total += best_d;
      }
      double target = rng.uniform() * total;
      std::size_t pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
      centers.push_back(x[pick]);
    }
    GaussianMixture g;
    g.means = centers;
    g.weights.assign(components, 1.0 / components);
    g.variances.assign(components, total_var);
    g = run_em(x, std::move(g), options, var_floor);
    if (g.log_likelihood > best.log_likelihood) best = std::move(g);
  }
  return best;
}

Bimodality gmm_bimodality(std::span<const double> values, const GmmOptions& options) {
  if (values.size() < 10) throw std::invalid_argument("gmm_bimodality: need >= 10 values");
  Bimodality out;
  out.one = fit_gmm(values, 1, options);
  out.two = fit_gmm(values, 2, options);
  const double ln_n = std::log(static_cast<double>(values.size()));
  out.bic_one = 2.0 * ln_n - 2.0 * out.one.log_likelihood;
  out.bic_two = 5.0 * ln_n - 2.0 * out.two.log_likelihood;
  out.delta_bic = out.bic_one - out.bic_two;
  out.converged = out.two.converged;
  return out;
}

// --- hypothesis tests -----------------------------------------------------------

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("student_t_two_sided_p: df must be positive");
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

TTest one_sample_t(std::span<const double> x, double mu0) {
  if (x.size() < 2) throw std::invalid_argument("one_sample_t: need >= 2 values");
  const double m = mean(x);
  const double sd = std::sqrt(variance(x, 1));
  if (!(sd > 0.0)) throw std::domain_error("one_sample_t: zero variance");
  TTest out;
  out.df = static_cast<double>(x.size() - 1);
  out.t = (m - mu0) / (sd / std::sqrt(static_cast<double>(x.size())));
  out.p = student_t_two_sided_p(out.t, out.df);
  out.cohens_d = (m - mu0) / sd;
  return out;
}

TTest paired_t(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y, 2, "paired_t");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  return one_sample_t(d, 0.0);
}

CorrelationTest pearson_test(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y, 3, "pearson_test");
  const auto r = pearson(x, y);
  if (!r) throw std::domain_error("pearson_test: constant input");
  CorrelationTest out{*r, 1.0, x.size()};
  const double df = static_cast<double>(x.size()) - 2.0;
  if (std::abs(*r) >= 1.0) {
    out.p = 0.0;
  } else {
    out.p = student_t_two_sided_p(*r * std::sqrt(df / (1.0 - *r * *r)), df);
  }
  return out;
}

std::vector<bool> fdr_bh(std::span<const double> p, double q) {
  for (const double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("fdr_bh: p-values must lie in [0, 1]");
  }
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::size_t cutoff = 0;
  for (std::size_t k = 1; k <= m; ++k) {
    if (p[order[k - 1]] <= static_cast<double>(k) / static_cast<double>(m) * q) cutoff = k;
  }
  std::vector<bool> reject(m, false);
  for (std::size_t k = 0; k < cutoff; ++k) reject[order[k]] = true;
  return reject;
}

std::vector<bool> bonferroni(std::span<const double> p, double alpha) {
  std::vector<bool> reject(p.size(), false);
  for (std::size_t i = 0; i < p.size(); ++i) reject[i] = p[i] <= alpha / static_cast<double>(p.size());
  return reject;
}

}  // namespace authaudit::stats
