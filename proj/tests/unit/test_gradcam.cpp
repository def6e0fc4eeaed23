#include <cmath>

#include "authaudit/binary_io.hpp"
#include "authaudit/explain.hpp"
#include "authaudit/synth_data.hpp"
#include "authaudit/synthetic_backbone.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace authaudit;

namespace {

Tensor3 random_input(std::uint64_t seed) {
  Pcg32 rng(seed);
  return preprocess(synthetic_image(rng));
}

double max_abs(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_SUITE("gradcam") {
  TEST_CASE("single channel, linear head: map is w/(HW) times the activation") {
    SyntheticConfig cfg;
    cfg.seed = 5;
    cfg.layers = {{4, 7, 4, 3}, {1, 3, 1, 1}};
    const SyntheticBackbone b(cfg);
    REQUIRE(b.meta().channels() == 1);
    HeadParams head = HeadParams::zeros({1, 1});
    const double w = 1.7;
    head.weights[0] = {w};
    head.biases[0] = {0.2};
    const Tensor3 x = random_input(1);
    const auto a = b.featmaps(x);
    const auto cam = gradcam(head, b, x);
    const double hw = static_cast<double>(a.plane());
    REQUIRE(cam.native.height == a.height);
    REQUIRE(cam.native.width == a.width);
    CHECK(cam.alphas[0] == doctest::Approx(w / hw).epsilon(1e-6));
    double worst = 0;
    for (std::size_t i = 0; i < a.plane(); ++i) {
      worst = std::max(worst, std::abs(cam.native.values[i] - w / hw * a.data[i]));
    }
    CHECK(worst <= 1e-6);
    CHECK(worst <= 1e-5 * max_abs(cam.native.values));
    CHECK(cam.upsampled.height == 224);
    CHECK(cam.upsampled.width == 224);
  }

  TEST_CASE("zero-weight head gives an all-zero map") {
    const SyntheticBackbone b(101);
    HeadParams head = HeadParams::zeros({32, 8, 1});
    head.biases.back()[0] = 50;
    const auto cam = gradcam(head, b, random_input(2));
    CHECK(max_abs(cam.native.values) == 0.0);
  }

  TEST_CASE("single retained channel: map is alpha_j times A_j") {
    const SyntheticBackbone b(202);
    Pcg32 rng(3);
    const HeadParams head = init_head({32, 16, 1}, rng);
    const Tensor3 x = random_input(3);
    const int j = 9;
    ChannelMask m{std::vector<bool>(32, false)};
    m.retained[j] = true;
    const auto cam = gradcam(head, b, x, &m);
    const auto a = b.featmaps(x);
    const auto g = head_gradient(head, b.embed(x, &m));
    const double alpha = g[j] / static_cast<double>(a.plane());
    CHECK(cam.alphas[j] == doctest::Approx(alpha).epsilon(1e-6));
    for (int k = 0; k < 32; ++k) {
      if (k != j) CHECK(cam.alphas[k] == 0.0);
    }
    const auto aj = a.channel(j);
    for (std::size_t i = 0; i < a.plane(); ++i) REQUIRE(std::abs(cam.native.values[i] - alpha * aj[i]) <= 1e-6);
  }

  TEST_CASE("all-true mask equals the unpruned map; cached featmaps equal live ones") {
    const SyntheticBackbone b(303);
    Pcg32 rng(4);
    const HeadParams head = init_head({32, 16, 1}, rng);
    const Tensor3 x = random_input(4);
    const auto full = gradcam(head, b, x);
    const auto all = ChannelMask::all(32);
    const auto masked = gradcam(head, b, x, &all);
    CHECK(testing::max_abs_diff(full.native.values, masked.native.values) <= 1e-6);
    const auto f = b.featmaps(x);
    const auto cached = gradcam(head, b, x, &all, &f);
    CHECK(testing::max_abs_diff(full.native.values, cached.native.values) <= 1e-6);
    ChannelMask none{std::vector<bool>(32, false)};
    CHECK_THROWS(gradcam(head, b, x, &none));
    CHECK_THROWS(gradcam(HeadParams::zeros({8, 1}), b, x));
  }

  TEST_CASE("linearity in the output weights") {
    const SyntheticBackbone b(101);
    Pcg32 rng(6);
    HeadParams h1 = init_head({32, 24, 1}, rng);
    HeadParams h2 = h1, h12 = h1;
    for (std::size_t i = 0; i < h1.weights[1].size(); ++i) {
      h2.weights[1][i] = rng.normal();
      h12.weights[1][i] = h1.weights[1][i] + h2.weights[1][i];
    }
    const Tensor3 x = random_input(6);
    const auto m1 = gradcam(h1, b, x).native.values, m2 = gradcam(h2, b, x).native.values,
               m12 = gradcam(h12, b, x).native.values;
    double worst = 0;
    for (std::size_t i = 0; i < m1.size(); ++i) worst = std::max(worst, std::abs(m12[i] - m1[i] - m2[i]));
    CHECK(worst <= 1e-6);
  }
}

TEST_SUITE("gradcam") {
  TEST_CASE("min-max normalisation and rendering") {
    AttributionMap m(1, 3, Method::GradCam);
    m.values = {-2, 0, 2};
    const auto n = normalize_minmax(m);
    CHECK(n.values == std::vector<double>{-1, 0, 1});
    CHECK(n.normalized);
    AttributionMap flat(2, 2, Method::Mpm);
    flat.values = {3, 3, 3, 3};
    CHECK(normalize_minmax(flat).values == std::vector<double>(4, 0.0));

    const Image img = render_map(n);
    CHECK(img.at(0, 0, 0) == 0);
    CHECK(img.at(0, 0, 2) == 255);
    CHECK(img.at(0, 1, 0) == 255);
    CHECK(img.at(0, 1, 1) == 255);
    CHECK(img.at(0, 1, 2) == 255);
    CHECK(img.at(0, 2, 0) == 255);
    CHECK(img.at(0, 2, 2) == 0);
    // Unnormalised maps are scaled by their largest magnitude first.
    CHECK(render_map(m) == img);
  }

  TEST_CASE("AMAP files round trip at f32 precision") {
    testing::TempDir dir("amap");
    AttributionMap m(3, 4, Method::Lime);
    Pcg32 rng(1);
    for (auto& v : m.values) v = static_cast<float>(rng.normal());
    m.normalized = true;
    save_map(dir / "m.amap", m);
    const auto back = load_map(dir / "m.amap");
    CHECK(back.values == m.values);
    CHECK(back.method == Method::Lime);
    CHECK(back.normalized);
    auto bytes = encode_map(m);
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_map(bytes), FormatError);
    bytes = encode_map(m);
    bytes.push_back(1);
    CHECK_THROWS_AS(decode_map(bytes), FormatError);
  }

  TEST_CASE("upsampling keeps same-size maps and marks resized ones") {
    AttributionMap m(2, 2, Method::GradCam);
    m.values = {1, 1, 1, 1};
    CHECK(!upsample(m, 2, 2).upsampled);
    const auto u = upsample(m, 8, 8);
    CHECK(u.upsampled);
    for (double v : u.values) CHECK(v == doctest::Approx(1.0));
  }
}
