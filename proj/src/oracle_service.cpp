#include "authaudit/oracle_service.hpp"

#include <httplib.h>

#include "authaudit/binary_io.hpp"

namespace authaudit {
namespace {

struct HttpError {
  int status;
  std::string message;
};

nlohmann::json tensor_json(const Tensor3& t) {
  return {{"shape", {t.channels, t.height, t.width}}, {"data", encode_f32_array(t.data)}};
}

}  // namespace

void OracleService::add_model(const std::string& name, std::shared_ptr<const Oracle> oracle) {
  models_[name] = std::move(oracle);
}

ServiceResponse OracleService::handle(const std::string& path, const std::string& body) const {
  try {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      throw HttpError{400, "request body is not valid JSON"};
    }
    if (!req.is_object() || !req.contains("model") || !req["model"].is_string()) {
      throw HttpError{400, "request lacks a 'model' string"};
    }
    const auto it = models_.find(req["model"].get<std::string>());
    if (it == models_.end()) throw HttpError{404, "unknown model " + req["model"].get<std::string>()};
    const Oracle& oracle = *it->second;
    const OracleMeta meta = oracle.meta();

    if (path == "/v1/meta") return {200, to_json(meta)};

    auto input = [&]() {
      if (!req.contains("image_png_b64") || !req["image_png_b64"].is_string()) {
        throw HttpError{400, "request lacks 'image_png_b64'"};
      }
      try {
        return preprocess(decode_png(base64_decode(req["image_png_b64"].get<std::string>())));
      } catch (const std::exception& e) {
        throw HttpError{400, std::string("cannot decode image: ") + e.what()};
      }
    };

    if (path == "/v1/embed") {
      const Tensor3 x = input();
      std::optional<ChannelMask> mask;
      if (req.contains("mask") && !req["mask"].is_null()) {
        if (!req["mask"].is_array()) throw HttpError{400, "'mask' must be an array of booleans"};
        mask = ChannelMask{req["mask"].get<std::vector<bool>>()};
        if (mask->size() != static_cast<std::size_t>(meta.channels())) {
          throw HttpError{422, "mask length does not match target-layer channels"};
        }
      }
      const Embedding e = oracle.embed(x, mask ? &*mask : nullptr);
      return {200, {{"embedding", encode_f32_array(e.values)}}};
    }
    if (path == "/v1/featmaps") return {200, tensor_json(oracle.featmaps(input()))};
    if (path == "/v1/pullback") {
      const Tensor3 x = input();
      if (!req.contains("grad_embedding") || !req["grad_embedding"].is_string()) {
        throw HttpError{400, "request lacks 'grad_embedding'"};
      }
      std::vector<float> g;
      try {
        g = decode_f32_array(req["grad_embedding"].get<std::string>());
      } catch (const std::exception&) {
        throw HttpError{400, "'grad_embedding' is not base64 f32"};
      }
      if (g.size() != meta.embed_dim) throw HttpError{422, "grad_embedding length does not match embed_dim"};
      const std::vector<double> gd(g.begin(), g.end());
      return {200, tensor_json(oracle.pullback(x, gd))};
    }
    throw HttpError{404, "unknown endpoint " + path};
  } catch (const HttpError& e) {
    return {e.status, {{"error", e.message}}};
  } catch (const nlohmann::json::exception& e) {
    return {400, {{"error", e.what()}}};
  } catch (const std::invalid_argument& e) {
    return {422, {{"error", e.what()}}};
  } catch (const std::exception& e) {
    return {500, {{"error", e.what()}}};
  }
}

void OracleService::mount(httplib::Server& server) const {
  for (const char* path : {"/v1/meta", "/v1/embed", "/v1/featmaps", "/v1/pullback"}) {
    server.Post(path, [this, p = std::string(path)](const httplib::Request& req, httplib::Response& res) {
      const auto out = handle(p, req.body);
      res.status = out.status;
      res.set_content(out.body.dump(), "application/json");
    });
  }
}

}  // namespace authaudit
