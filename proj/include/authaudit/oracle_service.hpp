#pragma once

// Server side of the oracle wire protocol for in-process backends. Used by
// `authaudit serve` and by the protocol conformance tests.

#include <map>
#include <memory>
#include <string>

#include "authaudit/oracle.hpp"

namespace httplib {
class Server;
}

namespace authaudit {

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

class OracleService {
 public:
  void add_model(const std::string& name, std::shared_ptr<const Oracle> oracle);

  // Dispatches one request; `path` is one of /v1/meta, /v1/embed,
  // /v1/featmaps, /v1/pullback. Errors: 400 malformed body, 404 unknown
  // model or endpoint, 422 shape mismatch.
  ServiceResponse handle(const std::string& path, const std::string& body) const;

  void mount(httplib::Server& server) const;

 private:
  std::map<std::string, std::shared_ptr<const Oracle>> models_;
};

}  // namespace authaudit
