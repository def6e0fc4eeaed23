#include <httplib.h>

#include <cmath>
#include <thread>

#include "authaudit/binary_io.hpp"
#include "authaudit/oracle_service.hpp"
#include "authaudit/remote_oracle.hpp"
#include "authaudit/synth_data.hpp"
#include "authaudit/synthetic_backbone.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace authaudit;

namespace {

// OracleService bound to an ephemeral localhost port for the lifetime of the object.
class LocalServer {
 public:
  LocalServer() {
    service_.add_model("syn-a", std::make_shared<SyntheticBackbone>(101));
    service_.add_model("syn-b", std::make_shared<SyntheticBackbone>(202));
    service_.mount(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw std::runtime_error("cannot bind a local port");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  OracleService service_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

double max_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("remote") {
  TEST_CASE("client round trip against an in-process service on 10 images") {
    LocalServer server;
    const RemoteOracle remote(server.url(), "syn-a");
    const SyntheticBackbone local(101);
    const auto meta = remote.meta();
    CHECK(meta.embed_dim == 32);
    CHECK(meta.featmap_shape == local.meta().featmap_shape);

    Pcg32 rng(17);
    std::vector<Tensor3> inputs;
    for (int i = 0; i < 10; ++i) inputs.push_back(preprocess(synthetic_image(rng)));
    for (const auto& x : inputs) {
      CHECK(max_diff(remote.embed(x).values, local.embed(x).values) <= 1e-5);
      const auto fr = remote.featmaps(x), fl = local.featmaps(x);
      REQUIRE(fr.same_shape(fl));
      CHECK(max_diff(fr.data, fl.data) <= 1e-5);
    }

    const auto batch = remote.embed_batch(inputs);
    REQUIRE(batch.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(max_diff(batch[i].values, local.embed(inputs[i]).values) <= 1e-5);
    const auto maps = remote.featmaps_batch(std::span(inputs).subspan(0, 3));
    CHECK(maps.size() == 3);
  }

  TEST_CASE("masked embed and pullback over the wire") {
    LocalServer server;
    const RemoteOracle remote(server.url(), "syn-b");
    const SyntheticBackbone local(202);
    Pcg32 rng(3);
    const Tensor3 x = preprocess(synthetic_image(rng));

    const auto all = ChannelMask::all(32);
    CHECK(max_diff(remote.embed(x, &all).values, remote.embed(x).values) <= 1e-5);
    ChannelMask m = ChannelMask::all(32);
    m.retained[4] = false;
    const auto em = remote.embed(x, &m);
    CHECK(em.values[4] == 0.0f);
    CHECK(max_diff(em.values, local.embed(x, &m).values) <= 1e-5);

    const auto g1 = testing::normal_vector(rng, 32), g2 = testing::normal_vector(rng, 32);
    std::vector<double> g12(32);
    for (int k = 0; k < 32; ++k) g12[k] = g1[k] + g2[k];
    const auto p1 = remote.pullback(x, g1), p2 = remote.pullback(x, g2), p12 = remote.pullback(x, g12);
    double worst = 0, scale = 0;
    for (std::size_t i = 0; i < p12.data.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(p12.data[i]) - p1.data[i] - p2.data[i]));
      scale = std::max(scale, std::abs(static_cast<double>(p12.data[i])));
    }
    CHECK(worst <= 1e-4 * scale);
    CHECK(max_diff(p1.data, local.pullback(x, g1).data) <= 1e-6);
  }

  TEST_CASE("service errors surface as oracle errors") {
    LocalServer server;
    const RemoteOracle unknown(server.url(), "missing");
    CHECK_THROWS_AS(unknown.meta(), OracleError);
    const RemoteOracle unreachable("http://127.0.0.1:1", "syn-a", {1, 2});
    CHECK_THROWS_AS(unreachable.meta(), OracleError);
  }

  TEST_CASE("tensor payload is the denormalized crop") {
    Pcg32 rng(9);
    const Image img = synthetic_image(rng);
    const auto png = decode_png(base64_decode(tensor_to_png_b64(preprocess(img))));
    CHECK(png == img);
  }
}
