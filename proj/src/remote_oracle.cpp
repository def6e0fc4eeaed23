#include "authaudit/remote_oracle.hpp"

#include <httplib.h>

#include "authaudit/binary_io.hpp"
#include "authaudit/parallel.hpp"

namespace authaudit {
namespace {

FeatureMapTensor tensor_from_json(const nlohmann::json& j) {
  const auto shape = j.at("shape").get<std::array<int, 3>>();
  Tensor3 t(shape[0], shape[1], shape[2]);
  t.data = decode_f32_array(j.at("data").get<std::string>());
  if (t.data.size() != t.plane() * static_cast<std::size_t>(t.channels)) {
    throw OracleError("feature tensor payload does not match its shape");
  }
  return t;
}

}  // namespace

std::string tensor_to_png_b64(const Tensor3& input) { return base64_encode(encode_png(denormalize(input))); }

RemoteOracle::RemoteOracle(std::string base_url, std::string model, RemoteOptions options)
    : base_url_(std::move(base_url)), model_(std::move(model)), options_(options) {
  if (options_.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
}

nlohmann::json RemoteOracle::post(const std::string& path, const nlohmann::json& body) const {
  httplib::Client client(base_url_);
  client.set_read_timeout(options_.timeout_seconds, 0);
  client.set_write_timeout(options_.timeout_seconds, 0);
  const auto res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    throw OracleError("oracle service at " + base_url_ + " unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw OracleError("oracle service " + path + " returned " + std::to_string(res->status) + ": " + res->body);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw OracleError("oracle service " + path + " returned malformed JSON: " + e.what());
  }
}

OracleMeta RemoteOracle::meta() const {
  std::call_once(meta_once_, [&] { meta_ = meta_from_json(post("/v1/meta", {{"model", model_}})); });
  return meta_;
}

Embedding RemoteOracle::do_embed(const Tensor3& input, const ChannelMask* mask) const {
  nlohmann::json body{{"model", model_}, {"image_png_b64", tensor_to_png_b64(input)}};
  if (mask != nullptr) body["mask"] = mask->retained;
  const auto res = post("/v1/embed", body);
  Embedding e{decode_f32_array(res.at("embedding").get<std::string>())};
  if (e.size() != meta().embed_dim) throw OracleError("embedding length does not match embed_dim");
  return e;
}

FeatureMapTensor RemoteOracle::do_featmaps(const Tensor3& input) const {
  return tensor_from_json(post("/v1/featmaps", {{"model", model_}, {"image_png_b64", tensor_to_png_b64(input)}}));
}

FeatureMapTensor RemoteOracle::do_pullback(const Tensor3& input, std::span<const double> grad) const {
  std::vector<float> g(grad.begin(), grad.end());
  return tensor_from_json(post("/v1/pullback", {{"model", model_},
                                                {"image_png_b64", tensor_to_png_b64(input)},
                                                {"grad_embedding", encode_f32_array(g)}}));
}

std::vector<Embedding> RemoteOracle::embed_batch(std::span<const Tensor3> inputs, const ChannelMask* mask) const {
  check_mask(mask, meta().channels());
  std::vector<Embedding> out(inputs.size());
  parallel_for(inputs.size(), options_.max_in_flight, [&](std::size_t i) { out[i] = do_embed(inputs[i], mask); });
  return out;
}

std::vector<FeatureMapTensor> RemoteOracle::featmaps_batch(std::span<const Tensor3> inputs) const {
  std::vector<FeatureMapTensor> out(inputs.size());
  parallel_for(inputs.size(), options_.max_in_flight, [&](std::size_t i) { out[i] = do_featmaps(inputs[i]); });
  return out;
}

}  // namespace authaudit
