#include <cmath>
#include <numbers>

#include "authaudit/stats.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace authaudit;
using namespace authaudit::stats;

namespace {

// Residuals of y after ordinary least squares on [1, q].
std::vector<double> ols_residuals(const std::vector<double>& y, const std::vector<double>& q) {
  const double n = static_cast<double>(y.size());
  double mq = 0, my = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    mq += q[i] / n;
    my += y[i] / n;
  }
  double sqq = 0, sqy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sqq += (q[i] - mq) * (q[i] - mq);
    sqy += (q[i] - mq) * (y[i] - my);
  }
  const double slope = sqy / sqq;
  std::vector<double> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - my - slope * (q[i] - mq);
  return r;
}

Matrix signal_plus_noise(std::size_t items, std::size_t participants, double signal_sd, double noise_sd,
                         std::uint64_t seed) {
  Pcg32 rng(seed);
  Matrix m(items, participants);
  for (std::size_t i = 0; i < items; ++i) {
    const double s = rng.normal(0.0, signal_sd);
    for (std::size_t p = 0; p < participants; ++p) m(i, p) = s + rng.normal(0.0, noise_sd);
  }
  return m;
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("spearman-brown exact cases") {
    CHECK(spearman_brown(0.5) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(std::round(spearman_brown(0.5) * 100) / 100 == doctest::Approx(0.67));
    CHECK(spearman_brown(1.0) == 1.0);
    CHECK(spearman_brown(0.0) == 0.0);
  }

  TEST_CASE("split-half reliability tracks the closed-form reliability") {
    const std::size_t participants = 25;
    const double signal_sd = 1.0, noise_sd = 2.0;
    const Matrix m = signal_plus_noise(1500, participants, signal_sd, noise_sd, 7);
    const auto rep = split_half_reliability(m, {200, 0, 3});
    const double vs = signal_sd * signal_sd, vn = noise_sd * noise_sd;
    const double analytic = vs / (vs + vn / participants);
    CHECK(rep.n_resamples == 200);
    CHECK(std::abs(rep.spearman_brown_r - analytic) <= 0.03);
    CHECK(rep.noise_ceiling == doctest::Approx(std::sqrt(rep.spearman_brown_r)));
    // Expected half-split correlation for groups of 12 and 13.
    const double half = vs / std::sqrt((vs + vn / 12) * (vs + vn / 13));
    CHECK(std::abs(rep.split_half_r - half) <= 0.03);
  }

  TEST_CASE("identical participants give perfect reliability") {
    Matrix m(10, 6);
    for (std::size_t i = 0; i < 10; ++i) {
      for (std::size_t p = 0; p < 6; ++p) m(i, p) = static_cast<double>((i * 7) % 5);
    }
    const auto rep = split_half_reliability(m, {20, 0, 1});
    CHECK(rep.split_half_r == doctest::Approx(1.0));
    CHECK(rep.spearman_brown_r == doctest::Approx(1.0));
    CHECK(rep.noise_ceiling == doctest::Approx(1.0));
  }

  TEST_CASE("degenerate split-half resamples are skipped") {
    Matrix m(5, 4, 1.0);
    CHECK_THROWS_AS(split_half_reliability(m), std::domain_error);
    CHECK_THROWS(split_half_reliability(Matrix(5, 1)));
  }

  TEST_CASE("model reliability") {
    const std::vector<double> v{1, 4, 2, 8, 5};
    CHECK(model_reliability(std::vector<std::vector<double>>(10, v)).value == doctest::Approx(1.0));
    const std::vector<double> w{2, 3, 3, 9, 1};
    const auto two = model_reliability({v, w});
    CHECK(two.value == doctest::Approx(testing::naive_pearson(v, w)).epsilon(1e-14));
    CHECK(two.n_pairs == 1);
    const auto with_const = model_reliability({v, w, {3, 3, 3, 3, 3}});
    CHECK(with_const.constant_vectors == std::vector<std::size_t>{2});
    CHECK(with_const.value == doctest::Approx(two.value));
  }

  TEST_CASE("plcc ceiling") {
    CHECK(plcc_ceiling(0.67, 0.91) == doctest::Approx(0.78).epsilon(0.005));
    CHECK(plcc_ceiling(1, 1) == 1.0);
    CHECK(plcc_ceiling(0.5, 0.5) == doctest::Approx(0.5));
    double prev = 0;
    for (double r = 0; r <= 1.0; r += 0.05) {
      const double a = plcc_ceiling(r, 0.7), b = plcc_ceiling(0.7, r);
      CHECK(a >= prev);
      CHECK(a == doctest::Approx(b));
      prev = a;
    }
    CHECK_THROWS(plcc_ceiling(1.2, 0.5));
  }

  TEST_CASE("partial correlation matches the residual-regression oracle") {
    Pcg32 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 20 + trial * 7;
      std::vector<double> q = testing::normal_vector(rng, n);
      std::vector<double> a(n), ah(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = 0.8 * q[i] + rng.normal();
        ah[i] = 0.5 * q[i] + 0.3 * a[i] + rng.normal();
      }
      const double oracle = testing::naive_pearson(ols_residuals(a, q), ols_residuals(ah, q));
      CHECK(std::abs(partial_correlation(a, ah, q) - oracle) <= 1e-10);
      CHECK(std::abs(partial_correlation(a, ah, q) - partial_correlation(ah, a, q)) <= 1e-14);
    }
  }

  TEST_CASE("partial correlation with an orthogonal control is the plain correlation") {
    Pcg32 rng(4);
    const std::size_t n = 200;
    auto a = testing::normal_vector(rng, n);
    auto ah = testing::normal_vector(rng, n);
    for (std::size_t i = 0; i < n; ++i) ah[i] += 0.6 * a[i];
    auto q = testing::normal_vector(rng, n);
    // Gram-Schmidt q against the constant, a and ah.
    auto project_out = [&](std::vector<double> v) {
      double m = 0;
      for (double x : v) m += x / n;
      for (auto& x : v) x -= m;
      return v;
    };
    const auto ac = project_out(a);
    auto hc = project_out(ah);
    double dot_ha = 0, aa = 0;
    for (std::size_t i = 0; i < n; ++i) {
      dot_ha += hc[i] * ac[i];
      aa += ac[i] * ac[i];
    }
    for (std::size_t i = 0; i < n; ++i) hc[i] -= dot_ha / aa * ac[i];
    q = project_out(q);
    for (const auto* basis : {&ac, static_cast<const std::vector<double>*>(&hc)}) {
      double d = 0, bb = 0;
      for (std::size_t i = 0; i < n; ++i) {
        d += q[i] * (*basis)[i];
        bb += (*basis)[i] * (*basis)[i];
      }
      for (std::size_t i = 0; i < n; ++i) q[i] -= d / bb * (*basis)[i];
    }
    CHECK(partial_correlation(a, ah, q) == doctest::Approx(*pearson(a, ah)).epsilon(1e-10));
  }

  TEST_CASE("metric bundle") {
    const std::vector<double> t{2, 2, 4, 4, 6};
    const auto same = metrics(t, t);
    CHECK(same.rmse == 0.0);
    CHECK(same.mae == 0.0);
    CHECK(*same.plcc == doctest::Approx(1.0));
    CHECK(*same.srcc == doctest::Approx(1.0));

    const std::vector<double> zm{-2, -1, 0, 1, 2}, neg{2, 1, 0, -1, -2};
    CHECK(*metrics(neg, zm).plcc == doctest::Approx(-1.0));

    const std::vector<double> p{1, 2, 3, 4, 5};
    const auto m = metrics(p, t);
    CHECK(m.rmse == doctest::Approx(std::sqrt(3.0 / 5.0)));
    CHECK(m.mae == doctest::Approx(0.6));
    CHECK(*m.plcc == doctest::Approx(testing::naive_pearson(p, t)));
    CHECK(*m.srcc == doctest::Approx(testing::naive_pearson(p, {1.5, 1.5, 3.5, 3.5, 5})));
    CHECK(!metrics(p, std::vector<double>(5, 3.0)).plcc);
  }

  TEST_CASE("ranks average ties") {
    const std::vector<double> x{10, 20, 20, 30, 5};
    CHECK(average_ranks(x) == std::vector<double>{2, 3.5, 3.5, 5, 1});
  }

  TEST_CASE("fisher z mean") {
    const std::vector<double> same(7, 0.37);
    CHECK(fisher_z_mean(same) == 0.37);
    const std::vector<double> two{0.2, 0.6};
    CHECK(fisher_z_mean(two) == doctest::Approx(std::tanh((std::atanh(0.2) + std::atanh(0.6)) / 2)));
  }
}

TEST_SUITE("stats") {
  TEST_CASE("single Gaussian favours one component") {
    int one_wins = 0;
    for (int draw = 0; draw < 100; ++draw) {
      Pcg32 rng(1000 + draw);
      const auto x = testing::normal_vector(rng, 2000, 3.0);
      GmmOptions opt;
      opt.restarts = 5;
      opt.seed = draw;
      if (gmm_bimodality(x, opt).delta_bic < 0) ++one_wins;
    }
    CHECK(one_wins >= 90);
  }

  TEST_CASE("well separated Gaussians favour two components") {
    Pcg32 rng(8);
    std::vector<double> x;
    for (int i = 0; i < 2000; ++i) x.push_back(rng.normal(i % 2 ? 5.0 : -5.0, 1.0));
    GmmOptions opt;
    opt.restarts = 5;
    const auto b = gmm_bimodality(x, opt);
    CHECK(b.delta_bic > 0);
    CHECK(b.converged);
    auto means = b.two.means;
    std::sort(means.begin(), means.end());
    CHECK(means[0] == doctest::Approx(-5).epsilon(0.05));
    CHECK(means[1] == doctest::Approx(5).epsilon(0.05));
    CHECK(b.two.weights[0] == doctest::Approx(0.5).epsilon(0.05));
    CHECK(b.bic_one - b.bic_two == doctest::Approx(b.delta_bic));
  }

  TEST_CASE("t distribution tails against closed forms") {
    // df = 1 is Cauchy, df = 2 has p = 1 - |t| / sqrt(t^2 + 2).
    for (double t : {0.0, 0.3, 1.0, 2.5, 12.0}) {
      CHECK(student_t_two_sided_p(t, 1) == doctest::Approx(1 - 2 / std::numbers::pi * std::atan(t)).epsilon(1e-10));
      CHECK(student_t_two_sided_p(-t, 2) == doctest::Approx(1 - t / std::sqrt(t * t + 2)).epsilon(1e-10));
    }
  }

  TEST_CASE("paired t against hand arithmetic") {
    const std::vector<double> x{5, 7, 6, 9, 8}, y{4, 5, 6, 6, 5};
    // d = 1 2 0 3 3, mean 1.8, sample sd sqrt(1.7).
    const auto t = paired_t(x, y);
    CHECK(t.df == 4);
    CHECK(t.t == doctest::Approx(1.8 / (std::sqrt(1.7) / std::sqrt(5.0))));
    CHECK(t.cohens_d == doctest::Approx(1.8 / std::sqrt(1.7)));
    CHECK(t.p == doctest::Approx(student_t_two_sided_p(t.t, 4)));
    CHECK_THROWS_AS(paired_t(x, x), std::domain_error);
    const auto o = one_sample_t(x, 5.0);
    CHECK(o.t == doctest::Approx(2.0 / (std::sqrt(2.5) / std::sqrt(5.0))));
  }

  TEST_CASE("pearson test p-value") {
    const std::vector<double> x{1, 2, 3, 4, 5, 6}, y{2, 1, 4, 3, 6, 5};
    const auto c = pearson_test(x, y);
    const double r = testing::naive_pearson(x, y);
    CHECK(c.r == doctest::Approx(r));
    CHECK(c.p == doctest::Approx(student_t_two_sided_p(r * std::sqrt(4 / (1 - r * r)), 4)));
    CHECK(pearson_test(x, x).p == 0.0);
  }

  TEST_CASE("benjamini-hochberg hand example") {
    const std::vector<double> p{0.001, 0.01, 0.02, 0.9};
    CHECK(fdr_bh(p, 0.05) == std::vector<bool>{true, true, true, false});
    CHECK(bonferroni(p, 0.05) == std::vector<bool>{true, true, false, false});
    // Step-up: 0.04 fails its own threshold 0.025 but is rescued by 0.045 <= 0.05.
    const std::vector<double> q{0.045, 0.04, 0.3, 0.001};
    const std::vector<double> q2{0.045, 0.04, 0.001, 0.02};
    CHECK(fdr_bh(q2, 0.05) == std::vector<bool>{true, true, true, true});
    CHECK(fdr_bh(q, 0.05) == std::vector<bool>{false, false, false, true});
  }

  TEST_CASE("property: BH rejects a superset of Bonferroni") {
    Pcg32 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> p(1 + rng.bounded(30));
      for (auto& v : p) v = std::pow(rng.uniform(), 3.0);
      const auto bh = fdr_bh(p, 0.05), bf = bonferroni(p, 0.05);
      for (std::size_t i = 0; i < p.size(); ++i) CHECK((!bf[i] || bh[i]));
    }
  }
}
