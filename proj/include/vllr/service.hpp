#pragma once

// JSON-over-HTTP client shared by the external decomposer and progress
// estimator ports. Each call owns its connection; retries never share state.

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vllr/error.hpp"

namespace vllr {

struct ServiceEndpoint {
  std::string url;  // e.g. http://127.0.0.1:8080/decompose
  int timeout_ms = 5000;
  int max_retries = 3;
  int backoff_base_ms = 100;
  std::string token;  // falls back to VLLR_ENDPOINT_TOKEN
};

struct ServiceTelemetry {
  int requests = 0;
  int retries = 0;
  int clamp_warnings = 0;
};

namespace service_detail {

struct ParsedUrl {
  std::string origin;  // scheme://host:port
  std::string path;
};

inline ParsedUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) fail(ErrorKind::kInvalidInput, "endpoint url '" + url + "' has no scheme");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace service_detail

// POSTs `body` and returns the response body. Transport failures and 5xx
// responses are retried with exponential backoff; other statuses are
// protocol errors.
inline std::string post_json(const ServiceEndpoint& ep, const nlohmann::json& body, ServiceTelemetry& telemetry) {
  const auto [origin, path] = service_detail::split_url(ep.url);
  std::string token = ep.token;
  if (token.empty()) {
    if (const char* env = std::getenv("VLLR_ENDPOINT_TOKEN")) token = env;
  }
  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= ep.max_retries; ++attempt) {
    if (attempt > 0) {
      ++telemetry.retries;
      std::this_thread::sleep_for(std::chrono::milliseconds(ep.backoff_base_ms << (attempt - 1)));
    }
    ++telemetry.requests;
    httplib::Client client(origin);
    const auto timeout = std::chrono::milliseconds(ep.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw ProtocolError("endpoint returned HTTP " + std::to_string(res->status), res->body);
    return res->body;
  }
  fail(ErrorKind::kTransport, "endpoint " + ep.url + " failed after " + std::to_string(ep.max_retries + 1) +
                                  " attempts: " + last_error);
}

inline nlohmann::json parse_response(const std::string& raw) {
  try {
    return nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    throw ProtocolError("response is not valid JSON", raw);
  }
}

}  // namespace vllr
