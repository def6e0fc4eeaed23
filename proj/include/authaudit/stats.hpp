#pragma once

// Correlation metrics, psychometric reliability, distribution diagnostics and
// the hypothesis tests used throughout the audit. All arithmetic is double.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace authaudit::stats {

// Row-major dense matrix (items x participants for rating data).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

double mean(std::span<const double> x);
// ddof = 0 gives the population variance, ddof = 1 the sample variance.
double variance(std::span<const double> x, int ddof = 1);

// Pearson r; nullopt when either input is constant.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
// Ranks starting at 1, ties receive the average of their positions.
std::vector<double> average_ranks(std::span<const double> x);
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

double spearman_brown(double r);
// tanh(mean(atanh(r))). Returns the common value exactly when all inputs agree.
double fisher_z_mean(std::span<const double> rs);

struct ReliabilityReport {
  double split_half_r = 0.0;
  double spearman_brown_r = 0.0;
  double noise_ceiling = 0.0;
  std::size_t n_resamples = 0;  // resamples that contributed
  std::size_t n_skipped = 0;
  std::vector<std::string> warnings;
};

struct SplitHalfOptions {
  std::size_t n_resamples = 20;
  // Size of the first group; 0 selects floor(P/2) (12 of 25 participants).
  std::size_t first_group = 0;
  std::uint64_t seed = 0;
};

ReliabilityReport split_half_reliability(const Matrix& item_by_participant,
                                         const SplitHalfOptions& options = {});

struct ModelReliability {
  double value = 0.0;
  std::size_t n_pairs = 0;
  std::vector<std::size_t> constant_vectors;  // excluded from all pairs
};

// Mean pairwise Pearson correlation over all unordered pairs of vectors.
ModelReliability model_reliability(const std::vector<std::vector<double>>& predictions);

double plcc_ceiling(double r_human, double r_model);

// r(a, a_hat | q): correlation of a and a_hat after partialling q out of both.
double partial_correlation(std::span<const double> a, std::span<const double> a_hat,
                           std::span<const double> q);

struct MetricBundle {
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> plcc;
  std::optional<double> srcc;
};

MetricBundle metrics(std::span<const double> pred, std::span<const double> target);

struct GaussianMixture {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  double log_likelihood = 0.0;
  bool converged = false;
};

struct GmmOptions {
  int restarts = 50;
  double tolerance = 1e-8;
  int max_iterations = 1000;
  std::uint64_t seed = 0;
};

GaussianMixture fit_gmm(std::span<const double> values, int components, const GmmOptions& options = {});

struct Bimodality {
  double delta_bic = 0.0;  // BIC(1 component) - BIC(2 components); > 0 favours bimodal
  double bic_one = 0.0;
  double bic_two = 0.0;
  GaussianMixture one;
  GaussianMixture two;
  bool converged = true;
};

Bimodality gmm_bimodality(std::span<const double> values, const GmmOptions& options = {});

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
  double cohens_d = 0.0;
};

double student_t_two_sided_p(double t, double df);
// Paired Student t; Cohen's d is the mean difference over the SD of differences.
TTest paired_t(std::span<const double> x, std::span<const double> y);
TTest one_sample_t(std::span<const double> x, double mu0);

struct CorrelationTest {
  double r = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

// Pearson r with the two-sided p-value of t = r sqrt((n-2)/(1-r^2)).
CorrelationTest pearson_test(std::span<const double> x, std::span<const double> y);

// Benjamini-Hochberg step-up at level q.
std::vector<bool> fdr_bh(std::span<const double> p_values, double q = 0.05);
std::vector<bool> bonferroni(std::span<const double> p_values, double alpha = 0.05);

}  // namespace authaudit::stats
