#include <cmath>

#include "authaudit/binary_io.hpp"
#include "authaudit/feature_cache.hpp"
#include "authaudit/oracle_service.hpp"
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

// Direct 4-deep loop for a zero-padded strided convolution with ReLU.
Tensor3 naive_conv(const Tensor3& in, const std::vector<float>& w, const ConvSpec& s) {
  const int oh = (in.height + 2 * s.pad - s.kernel) / s.stride + 1;
  const int ow = (in.width + 2 * s.pad - s.kernel) / s.stride + 1;
  Tensor3 out(s.out_channels, oh, ow);
  for (int o = 0; o < s.out_channels; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0;
        for (int c = 0; c < in.channels; ++c) {
          for (int ky = 0; ky < s.kernel; ++ky) {
            for (int kx = 0; kx < s.kernel; ++kx) {
              const int iy = y * s.stride - s.pad + ky, ix = x * s.stride - s.pad + kx;
              if (iy < 0 || ix < 0 || iy >= in.height || ix >= in.width) continue;
              acc += w[((o * in.channels + c) * s.kernel + ky) * s.kernel + kx] * in.at(c, iy, ix);
            }
          }
        }
        out.at(o, y, x) = static_cast<float>(std::max(0.0, acc));
      }
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("oracle") {
  TEST_CASE("synthetic backbone metadata") {
    const SyntheticBackbone b(101);
    const auto m = b.meta();
    CHECK(m.embed_dim == 32);
    CHECK(m.featmap_shape == std::array<int, 3>{32, 14, 14});
    CHECK(m.input_size == std::array<int, 3>{224, 224, 3});
    CHECK(m.backbone_name == "synthetic-101");
    const auto back = meta_from_json(to_json(m));
    CHECK(back.embed_dim == m.embed_dim);
    CHECK(back.featmap_shape == m.featmap_shape);
    CHECK(back.target_layer_name == m.target_layer_name);
  }

  TEST_CASE("weights are He-uniform and seed dependent") {
    const SyntheticBackbone a(1), b(2);
    const auto& cfg = a.config();
    int in = cfg.input_channels;
    for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
      const auto& s = cfg.layers[l];
      const double limit = std::sqrt(6.0 / (in * s.kernel * s.kernel));
      CHECK(a.weights(l).size() == static_cast<std::size_t>(s.out_channels * in * s.kernel * s.kernel));
      for (float w : a.weights(l)) REQUIRE(std::abs(w) <= limit);
      in = s.out_channels;
    }
    CHECK(a.weights(0) != b.weights(0));
    CHECK(SyntheticBackbone(1).weights(2) == a.weights(2));
  }

  TEST_CASE("convolution matches the naive loop") {
    Pcg32 rng(3);
    Tensor3 in(3, 13, 11);
    for (auto& v : in.data) v = static_cast<float>(rng.normal());
    const ConvSpec spec{4, 5, 2, 2};
    std::vector<float> w(4 * 3 * 25);
    for (auto& v : w) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    const Tensor3 got = conv2d_relu(in, w, spec);
    const Tensor3 want = naive_conv(in, w, spec);
    REQUIRE(got.same_shape(want));
    for (std::size_t i = 0; i < got.data.size(); ++i) REQUIRE(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-5));
  }

  TEST_CASE("embed is the global average pool of the feature maps") {
    const SyntheticBackbone b(202);
    const Tensor3 x = random_input(1);
    const auto f = b.featmaps(x);
    const auto e = b.embed(x);
    REQUIRE(e.size() == 32);
    for (int k = 0; k < 32; ++k) {
      double s = 0;
      for (float v : f.channel(k)) s += v;
      CHECK(e.values[k] == doctest::Approx(s / f.plane()).epsilon(1e-6));
    }
  }

  TEST_CASE("masking zeroes exactly the ablated coordinates") {
    const SyntheticBackbone b(303);
    const Tensor3 x = random_input(2);
    const auto e = b.embed(x);
    const auto all = ChannelMask::all(32);
    CHECK(b.embed(x, &all) == e);
    for (int k : {0, 7, 31}) {
      ChannelMask m = ChannelMask::all(32);
      m.retained[k] = false;
      const auto em = b.embed(x, &m);
      for (int j = 0; j < 32; ++j) CHECK(em.values[j] == (j == k ? 0.0f : e.values[j]));
    }
    ChannelMask wrong = ChannelMask::all(5);
    CHECK_THROWS(b.embed(x, &wrong));
    CHECK(b.tail(b.featmaps(x), nullptr) == e);
  }

  TEST_CASE("frozen: repeated calls are bit identical") {
    const SyntheticBackbone b(101);
    const Tensor3 x = random_input(3);
    CHECK(b.embed(x) == b.embed(x));
    CHECK(b.featmaps(x) == b.featmaps(x));
    CHECK(SyntheticBackbone(101).embed(x) == b.embed(x));
  }

  TEST_CASE("pullback of the GAP tail") {
    const SyntheticBackbone b(101);
    const Tensor3 x = random_input(4);
    Pcg32 rng(5);
    const auto g1 = testing::normal_vector(rng, 32), g2 = testing::normal_vector(rng, 32);
    const auto p1 = b.pullback(x, g1);
    CHECK(p1.channels == 32);
    CHECK(p1.height == 14);
    for (int k = 0; k < 32; ++k) {
      for (float v : p1.channel(k)) REQUIRE(v == doctest::Approx(g1[k] / 196.0).epsilon(1e-6));
    }
    std::vector<double> g12(32);
    for (int k = 0; k < 32; ++k) g12[k] = g1[k] + g2[k];
    const auto p2 = b.pullback(x, g2), p12 = b.pullback(x, g12);
    double worst = 0;
    for (std::size_t i = 0; i < p12.data.size(); ++i) worst = std::max(worst, std::abs(p12.data[i] - p1.data[i] - p2.data[i]) + 0.0);
    CHECK(worst <= 1e-6);
    CHECK_THROWS(b.pullback(x, std::vector<double>(3, 1.0)));
  }

  TEST_CASE("pullback agrees with central differences through the tail") {
    const SyntheticBackbone b(7);
    const Tensor3 x = random_input(6);
    Pcg32 rng(8);
    const auto g = testing::normal_vector(rng, 32);
    const auto f = b.featmaps(x);
    const auto p = b.pullback(x, g);
    // The tail is piecewise linear, so a wide step keeps f32 rounding out of the quotient.
    const double eps = 8.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int k = static_cast<int>(rng.bounded(32)), y = static_cast<int>(rng.bounded(14)),
                xx = static_cast<int>(rng.bounded(14));
      auto plus = f, minus = f;
      plus.at(k, y, xx) += static_cast<float>(eps);
      minus.at(k, y, xx) -= static_cast<float>(eps);
      const auto ep = b.tail(plus, nullptr), em = b.tail(minus, nullptr);
      double fd = 0;
      for (int j = 0; j < 32; ++j) fd += g[j] * (static_cast<double>(ep.values[j]) - em.values[j]) / (2 * eps);
      CHECK(std::abs(fd - p.at(k, y, xx)) <= 1e-4 * std::abs(p.at(k, y, xx)) + 1e-7);
    }
  }

  TEST_CASE("cached features equal live calls") {
    testing::TempDir dir("oracle-cache");
    const SyntheticBackbone b(101);
    FeatureCacheWriter w;
    std::vector<Tensor3> inputs;
    for (int i = 0; i < 10; ++i) {
      inputs.push_back(random_input(100 + i));
      w.add_embedding("i" + std::to_string(i), b.embed(inputs.back()));
    }
    w.write(dir / "e.afc");
    const auto cache = FeatureCache::open(dir / "e.afc");
    for (int i = 0; i < 10; ++i) {
      const auto live = b.embed(inputs[i]);
      const auto cached = cache.embedding("i" + std::to_string(i));
      for (std::size_t k = 0; k < live.size(); ++k) CHECK(std::abs(live.values[k] - cached.values[k]) <= 1e-5);
    }
  }
}

TEST_SUITE("oracle") {
  TEST_CASE("service dispatch and error statuses") {
    OracleService svc;
    auto backbone = std::make_shared<SyntheticBackbone>(101);
    svc.add_model("syn", backbone);
    const auto meta = svc.handle("/v1/meta", R"({"model":"syn"})");
    CHECK(meta.status == 200);
    CHECK(meta.body.at("embed_dim") == 32);

    CHECK(svc.handle("/v1/meta", R"({"model":"nope"})").status == 404);
    CHECK(svc.handle("/v1/meta", "{not json").status == 400);
    CHECK(svc.handle("/v1/meta", R"({"x":1})").status == 400);
    CHECK(svc.handle("/v1/other", R"({"model":"syn"})").status == 404);

    Pcg32 rng(1);
    const Image img = synthetic_image(rng);
    const std::string png = base64_encode(encode_png(img));
    nlohmann::json req{{"model", "syn"}, {"image_png_b64", png}};
    const auto embed = svc.handle("/v1/embed", req.dump());
    REQUIRE(embed.status == 200);
    const auto values = decode_f32_array(embed.body.at("embedding").get<std::string>());
    CHECK(values == backbone->embed(img).values);

    req["mask"] = std::vector<bool>(32, true);
    CHECK(decode_f32_array(svc.handle("/v1/embed", req.dump()).body.at("embedding").get<std::string>()) == values);
    req["mask"] = std::vector<bool>(3, true);
    CHECK(svc.handle("/v1/embed", req.dump()).status == 422);
    req.erase("mask");

    req["grad_embedding"] = encode_f32_array(std::vector<float>(31, 1.0f));
    CHECK(svc.handle("/v1/pullback", req.dump()).status == 422);
    req["grad_embedding"] = encode_f32_array(std::vector<float>(32, 1.0f));
    const auto pb = svc.handle("/v1/pullback", req.dump());
    REQUIRE(pb.status == 200);
    CHECK(pb.body.at("shape") == nlohmann::json::array({32, 14, 14}));

    const auto fm = svc.handle("/v1/featmaps", req.dump());
    REQUIRE(fm.status == 200);
    CHECK(decode_f32_array(fm.body.at("data").get<std::string>()) == backbone->featmaps(img).data);

    nlohmann::json bad{{"model", "syn"}, {"image_png_b64", "AAAA"}};
    CHECK(svc.handle("/v1/embed", bad.dump()).status == 400);
  }
}
