#pragma once

#include <memory>
#include <string>

#include <httplib.h>

#include "painpoint/errors.hpp"
#include "painpoint/gateway.hpp"

namespace painpoint {

// cpp-httplib backed transport for live/record gateway modes.
class HttplibTransport final : public Transport {
 public:
  HttpResult post(const std::string& url,
                  const std::vector<std::pair<std::string, std::string>>& headers,
                  const std::string& body) override {
    auto [origin, path] = split_url(url);
    httplib::Client client(origin);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    httplib::Headers header_map;
    for (const auto& [key, value] : headers)
      if (key != "Content-Type") header_map.emplace(key, value);
    auto result = client.Post(path, header_map, body, "application/json");
    if (!result)
      throw GatewayError("transport failure: " + httplib::to_string(result.error()));
    return {result->status, result->body};
  }

 private:
  static std::pair<std::string, std::string> split_url(const std::string& url) {
    size_t scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("endpoint URL needs a scheme: " + url);
    size_t path_start = url.find('/', scheme + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
  }
};

inline std::unique_ptr<Transport> make_http_transport() {
  return std::make_unique<HttplibTransport>();
}

}  // namespace painpoint
