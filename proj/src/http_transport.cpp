// OpenAI-compatible chat-completions transport over cpp-httplib.

#include <httplib.h>

#include <fmt/format.h>

#include "review_arcade/model_gateway.hpp"

namespace review_arcade::detail {

using nlohmann::json;

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string base_path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw UsageError(fmt::format("endpoint '{}' lacks a scheme", url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.origin = url.substr(0, path_start);
  ep.base_path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!ep.base_path.empty() && ep.base_path.back() == '/') ep.base_path.pop_back();
  return ep;
}

}  // namespace

json chat_request_body(const BackendConfig& config, const CompletionRequest& request) {
  json messages = json::array();
  if (!request.system_text.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_text}});
  }
  messages.push_back({{"role", "user"}, {"content", request.user_text}});
  return {{"model", config.model_name},
          {"messages", messages},
          {"temperature", request.temperature.value_or(config.temperature)},
          {"max_tokens", request.max_tokens.value_or(config.max_tokens)}};
}

std::string http_chat_completion(const BackendConfig& config, const CompletionRequest& request,
                                 const std::string& api_key, Usage& usage) {
  const auto ep = split_endpoint(config.endpoint);
  httplib::Client client(ep.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout).count();
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(config.timeout).count() % 1'000'000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  const httplib::Headers headers{{"Authorization", "Bearer " + api_key}};
  const auto body = chat_request_body(config, request).dump();
  auto res = client.Post(ep.base_path + "/chat/completions", headers, body, "application/json");
  if (!res) {
    const auto err = res.error();
    const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
    throw AttemptFailure{timed_out ? FailureKind::timeout : FailureKind::transient,
                         fmt::format("network error: {}", httplib::to_string(err))};
  }
  const int status = res->status;
  if (status == 429) throw AttemptFailure{FailureKind::rate_limited, "HTTP 429"};
  if (status == 408) throw AttemptFailure{FailureKind::timeout, "HTTP 408"};
  if (status >= 500) throw AttemptFailure{FailureKind::transient, fmt::format("HTTP {}", status)};
  if (status >= 400) {
    throw AttemptFailure{FailureKind::client_error,
                         fmt::format("HTTP {}: {}", status, res->body.substr(0, 500))};
  }
  try {
    const auto doc = json::parse(res->body);
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    if (doc.contains("usage") && doc["usage"].is_object()) {
      usage.prompt_tokens = doc["usage"].value("prompt_tokens", std::size_t{0});
      usage.completion_tokens = doc["usage"].value("completion_tokens", std::size_t{0});
    }
    return content.is_string() ? content.get<std::string>() : std::string();
  } catch (const json::exception& e) {
    throw AttemptFailure{FailureKind::transient, fmt::format("malformed response body: {}", e.what())};
  }
}

}  // namespace review_arcade::detail
