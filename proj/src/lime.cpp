#include "authaudit/explain.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "authaudit/parallel.hpp"
#include "authaudit/rng.hpp"

namespace authaudit {

LimeSamples lime_sample(const Predictor& predictor, const Image& image, const SegmentLabels& segments,
                        const LimeOptions& options) {
  if (segments.height != image.height || segments.width != image.width || segments.k < 1) {
    throw std::invalid_argument("lime: segments do not match the image");
  }
  if (options.samples < 1 || options.keep_p < 0.0 || options.keep_p > 1.0) {
    throw std::invalid_argument("lime: invalid sampling options");
  }
  const std::size_t n = static_cast<std::size_t>(image.height) * image.width;
  std::array<std::uint8_t, 3> fill{};
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p) s += image.rgb[3 * p + c];
    fill[c] = static_cast<std::uint8_t>(std::lround(s / static_cast<double>(n)));
  }

  LimeSamples out;
  Pcg32 rng(options.seed);
  out.z.assign(options.samples, std::vector<std::uint8_t>(segments.k));
  for (auto& z : out.z) {
    for (auto& v : z) v = rng.bernoulli(options.keep_p) ? 1 : 0;
  }
  out.outputs.assign(options.samples, 0.0);
  parallel_for(out.z.size(), options.jobs, [&](std::size_t i) {
    Image perturbed = image;
    const auto& z = out.z[i];
    for (std::size_t p = 0; p < n; ++p) {
      if (!z[segments.labels[p]]) std::copy(fill.begin(), fill.end(), perturbed.rgb.begin() + 3 * p);
    }
    try {
      out.outputs[i] = predictor(preprocess(perturbed));
    } catch (const std::exception& e) {
      throw std::runtime_error("lime: predictor failed on perturbation " + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

LimeResult lime_fit(const LimeSamples& samples, double full_prediction, const LimeOptions& options) {
  const std::size_t m = samples.z.size();
  if (m == 0 || samples.outputs.size() != m) throw std::invalid_argument("lime_fit: no samples");
  const std::size_t k = samples.z[0].size();
  if (!(options.kernel_width > 0.0) || options.ridge_lambda < 0.0) throw std::invalid_argument("lime_fit: invalid kernel or ridge");

  std::vector<double> pi(m), t(m);
  double wsum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (samples.z[i].size() != k) throw std::invalid_argument("lime_fit: ragged perturbation matrix");
    std::size_t dropped = 0;
    for (auto v : samples.z[i]) dropped += v ? 0 : 1;
    const double d = static_cast<double>(dropped) / static_cast<double>(k);
    pi[i] = std::exp(-d * d / (options.kernel_width * options.kernel_width));
    t[i] = samples.outputs[i] - full_prediction;
    wsum += pi[i];
  }
  Eigen::VectorXd zbar = Eigen::VectorXd::Zero(k);
  double tbar = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) zbar[j] += pi[i] * samples.z[i][j];
    tbar += pi[i] * t[i];
  }
  zbar /= wsum;
  tbar /= wsum;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd zc(k);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) zc[j] = samples.z[i][j] - zbar[j];
    a.selfadjointView<Eigen::Lower>().rankUpdate(zc, pi[i]);
    rhs += pi[i] * (t[i] - tbar) * zc;
  }
  a = a.selfadjointView<Eigen::Lower>();
  a.diagonal().array() += options.ridge_lambda;
  const Eigen::VectorXd beta = options.ridge_lambda > 0.0 ? Eigen::VectorXd(a.ldlt().solve(rhs))
                                                          : Eigen::VectorXd(a.completeOrthogonalDecomposition().solve(rhs));

  LimeResult r;
  r.config = options;
  r.full_prediction = full_prediction;
  r.betas.assign(beta.data(), beta.data() + k);
  r.intercept = tbar - beta.dot(zbar);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double fit = r.intercept;
    for (std::size_t j = 0; j < k; ++j) fit += beta[j] * samples.z[i][j];
    ss_res += pi[i] * (t[i] - fit) * (t[i] - fit);
    ss_tot += pi[i] * (t[i] - tbar) * (t[i] - tbar);
  }
  if (ss_tot > 0.0) r.fidelity_r2 = 1.0 - ss_res / ss_tot;
  return r;
}

LimeResult lime_explain(const Predictor& predictor, const Image& image, const SegmentLabels& segments,
                        const LimeOptions& options) {
  const double full = predictor(preprocess(image));
  return lime_fit(lime_sample(predictor, image, segments, options), full, options);
}

AttributionMap beta_to_map(const LimeResult& result, const SegmentLabels& segments) {
  if (result.betas.size() != static_cast<std::size_t>(segments.k)) {
    throw std::invalid_argument("beta_to_map: " + std::to_string(result.betas.size()) + " coefficients for " +
                                std::to_string(segments.k) + " segments");
  }
  AttributionMap map(segments.height, segments.width, Method::Lime);
  for (std::size_t p = 0; p < map.values.size(); ++p) map.values[p] = result.betas[segments.labels[p]];
  return map;
}

}  // namespace authaudit
