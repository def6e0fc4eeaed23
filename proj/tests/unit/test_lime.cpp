#include <cmath>
#include <map>
#include <numeric>

#include "authaudit/explain.hpp"
#include "authaudit/synth_data.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace authaudit;

namespace {

// 4x4 grid of 56x56 blocks over a 224 image, coloured so no block matches the
// mean colour that LIME uses to switch a segment off.
struct Planted {
  Image image{224, 224};
  SegmentLabels seg;
  std::vector<double> c;
  double c0 = 2.5;
};

Planted planted_grid() {
  Planted p;
  p.seg.height = p.seg.width = 224;
  p.seg.k = 16;
  p.seg.labels.resize(224 * 224);
  for (int y = 0; y < 224; ++y) {
    for (int x = 0; x < 224; ++x) {
      const int k = (y / 56) * 4 + x / 56;
      p.seg.labels[y * 224 + x] = k;
      const bool light = ((y / 56) + (x / 56)) % 2 == 0;
      p.image.at(y, x, 0) = light ? 220 : 30;
      p.image.at(y, x, 1) = static_cast<std::uint8_t>(40 + 10 * k);
      p.image.at(y, x, 2) = light ? 20 : 230;
    }
  }
  Pcg32 rng(4);
  for (int k = 0; k < 16; ++k) p.c.push_back(rng.uniform(-3, 3));
  return p;
}

// Reads z_k back from the centre pixel of each block and applies the planted linear model.
Predictor planted_predictor(const Planted& p) {
  const Tensor3 reference = preprocess(p.image);
  return [&p, reference](const Tensor3& t) {
    double out = p.c0;
    for (int k = 0; k < 16; ++k) {
      const int y = (k / 4) * 56 + 28, x = (k % 4) * 56 + 28;
      if (t.at(0, y, x) == reference.at(0, y, x)) out += p.c[k];
    }
    return out;
  };
}

SegmentLabels halves(int h, int w) {
  SegmentLabels s;
  s.height = h;
  s.width = w;
  s.k = 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) s.labels.push_back(x < w / 2 ? 0 : 1);
  }
  return s;
}

}  // namespace

TEST_SUITE("lime") {
  TEST_CASE("planted linear-in-z predictor is recovered") {
    const Planted p = planted_grid();
    LimeOptions opt;
    opt.ridge_lambda = 1e-6;
    opt.samples = 1200;
    opt.seed = 7;
    const auto r = lime_explain(planted_predictor(p), p.image, p.seg, opt);
    REQUIRE(r.betas.size() == 16);
    for (int k = 0; k < 16; ++k) CHECK(std::abs(r.betas[k] - p.c[k]) <= 0.05);
    REQUIRE(r.fidelity_r2);
    CHECK(*r.fidelity_r2 >= 0.999);
    const double full = p.c0 + std::accumulate(p.c.begin(), p.c.end(), 0.0);
    CHECK(r.full_prediction == doctest::Approx(full));
    // Outputs are centred on the full prediction, so the intercept absorbs c0 - full.
    CHECK(r.intercept == doctest::Approx(p.c0 - full).epsilon(1e-4));
  }

  TEST_CASE("constant predictor: zero coefficients, fidelity undefined") {
    const Planted p = planted_grid();
    LimeOptions opt;
    opt.samples = 200;
    const auto r = lime_explain([](const Tensor3&) { return 3.0; }, p.image, p.seg, opt);
    for (double b : r.betas) CHECK(std::abs(b) <= 1e-12);
    CHECK(!r.fidelity_r2);
  }

  TEST_CASE("determinism given the seed, independent of workers") {
    const Planted p = planted_grid();
    const auto f = planted_predictor(p);
    LimeOptions opt;
    opt.samples = 300;
    opt.seed = 3;
    const auto a = lime_sample(f, p.image, p.seg, opt);
    opt.jobs = 3;
    const auto b = lime_sample(f, p.image, p.seg, opt);
    CHECK(a.z == b.z);
    CHECK(a.outputs == b.outputs);
    opt.seed = 4;
    CHECK(lime_sample(f, p.image, p.seg, opt).z != a.z);
  }

  TEST_CASE("coefficients are invariant to the order of perturbations") {
    const Planted p = planted_grid();
    const auto f = [&](const Tensor3& t) { return std::sin(planted_predictor(p)(t)); };
    LimeOptions opt;
    opt.samples = 400;
    const auto s = lime_sample(f, p.image, p.seg, opt);
    LimeSamples shuffled = s;
    std::vector<std::size_t> order(s.z.size());
    std::iota(order.begin(), order.end(), 0);
    Pcg32 rng(1);
    rng.shuffle(std::span(order));
    for (std::size_t i = 0; i < order.size(); ++i) {
      shuffled.z[i] = s.z[order[i]];
      shuffled.outputs[i] = s.outputs[order[i]];
    }
    const auto a = lime_fit(s, 0.3, opt), b = lime_fit(shuffled, 0.3, opt);
    CHECK(testing::max_abs_diff(a.betas, b.betas) <= 1e-9);
    CHECK(std::abs(*a.fidelity_r2 - *b.fidelity_r2) <= 1e-9);
  }

  TEST_CASE("coefficients to maps") {
    LimeResult r;
    SegmentLabels one;
    one.height = 3;
    one.width = 5;
    one.k = 1;
    one.labels.assign(15, 0);
    r.betas = {0.7};
    for (double v : beta_to_map(r, one).values) CHECK(v == 0.7);

    const auto two = halves(4, 6);
    r.betas = {1, -1};
    const auto m = beta_to_map(r, two);
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 6; ++x) CHECK(m.at(y, x) == (x < 3 ? 1.0 : -1.0));
    }
    CHECK(m.method == Method::Lime);
    CHECK_THROWS(beta_to_map(LimeResult{}, two));

    // Mean of the map is the area-weighted mean of the coefficients.
    const Planted p = planted_grid();
    r.betas = p.c;
    const auto big = beta_to_map(r, p.seg);
    std::map<int, double> area;
    for (int l : p.seg.labels) area[l] += 1;
    double weighted = 0;
    for (int k = 0; k < 16; ++k) weighted += area[k] * p.c[k];
    const double mean = std::accumulate(big.values.begin(), big.values.end(), 0.0) / big.values.size();
    CHECK(mean == doctest::Approx(weighted / (224.0 * 224.0)).epsilon(1e-12));
  }

  TEST_CASE("invalid inputs") {
    const Planted p = planted_grid();
    LimeOptions opt;
    opt.samples = 0;
    CHECK_THROWS(lime_sample(planted_predictor(p), p.image, p.seg, opt));
    CHECK_THROWS(lime_sample(planted_predictor(p), p.image, halves(4, 4), LimeOptions{}));
    opt.samples = 10;
    opt.kernel_width = 0;
    CHECK_THROWS(lime_fit(LimeSamples{{{1, 0}}, {1.0}}, 0.0, opt));
  }
}

TEST_SUITE("lime") {
  TEST_CASE("CIELAB conversion reference colours") {
    Image img(1, 3);
    img.at(0, 0, 0) = img.at(0, 0, 1) = img.at(0, 0, 2) = 255;
    img.at(0, 2, 0) = 255;
    const auto lab = rgb_to_lab(img);
    CHECK(lab[0][0] == doctest::Approx(100).epsilon(1e-3));
    CHECK(std::abs(lab[1][0]) < 0.01);
    CHECK(std::abs(lab[2][0]) < 0.01);
    CHECK(lab[0][1] == doctest::Approx(0).epsilon(1e-9));
    CHECK(lab[0][2] == doctest::Approx(53.24).epsilon(1e-3));
    CHECK(lab[1][2] == doctest::Approx(80.09).epsilon(1e-3));
    CHECK(lab[2][2] == doctest::Approx(67.20).epsilon(1e-3));
  }

  TEST_CASE("uniform image, K=4: four connected segments of near-equal area") {
    Image img(64, 64);
    std::fill(img.rgb.begin(), img.rgb.end(), 128);
    const auto seg = slic(img, {4, 10.0, 10});
    CHECK(seg.k == 4);
    CHECK(segments_valid(seg));
    std::vector<double> area(seg.k, 0);
    for (int l : seg.labels) area[l] += 1;
    for (double a : area) CHECK(std::abs(a - 64.0 * 64 / 4) <= 0.1 * 64 * 64 / 4);
  }

  TEST_CASE("two-colour image, K=2: boundary follows the colour edge") {
    Image img(40, 60);
    for (int y = 0; y < 40; ++y) {
      for (int x = 0; x < 60; ++x) {
        img.at(y, x, 0) = x < 30 ? 230 : 10;
        img.at(y, x, 2) = x < 30 ? 10 : 230;
      }
    }
    const auto seg = slic(img, {2, 10.0, 10});
    REQUIRE(seg.k == 2);
    CHECK(segments_valid(seg));
    const int left = seg.at(20, 5), right = seg.at(20, 55);
    CHECK(left != right);
    for (int y = 0; y < 40; ++y) {
      for (int x = 0; x < 60; ++x) {
        if (x < 28) CHECK(seg.at(y, x) == left);
        if (x > 31) CHECK(seg.at(y, x) == right);
      }
    }
  }

  TEST_CASE("labels partition the grid on natural-ish images") {
    Pcg32 rng(2);
    const Image img = synthetic_image(rng);
    for (int k : {1, 10, 50, 150}) {
      const auto seg = slic(img, {k, 10.0, 10});
      CHECK(seg.labels.size() == 224u * 224u);
      CHECK(seg.k >= 1);
      CHECK(seg.k <= std::max(k, 1) + 10);
      CHECK(segments_valid(seg));
    }
    CHECK(slic(img) .k > 1);
    CHECK_THROWS(slic(img, {0, 10.0, 10}));
  }

  TEST_CASE("segments_valid rejects split or missing labels") {
    SegmentLabels s = halves(2, 4);
    CHECK(segments_valid(s));
    s.labels = {0, 1, 0, 1, 0, 1, 0, 1};
    CHECK(!segments_valid(s));
    s.labels = {0, 0, 0, 0, 0, 0, 0, 0};
    CHECK(!segments_valid(s));
  }
}
