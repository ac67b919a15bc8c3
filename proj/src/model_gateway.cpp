#include "review_arcade/model_gateway.hpp"

#include <fnmatch.h>

#include <cctype>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "review_arcade/util.hpp"

namespace review_arcade {

using nlohmann::json;

std::string_view to_string(FailureKind k) {
  switch (k) {
    case FailureKind::transient: return "transient";
    case FailureKind::rate_limited: return "rate_limited";
    case FailureKind::timeout: return "timeout";
    case FailureKind::client_error: return "client_error";
  }
  return "unknown";
}

namespace {

FailureKind parse_failure_kind(const std::string& s) {
  if (s == "transient") return FailureKind::transient;
  if (s == "rate_limited") return FailureKind::rate_limited;
  if (s == "timeout") return FailureKind::timeout;
  if (s == "client_error") return FailureKind::client_error;
  throw UsageError(fmt::format("mock script: unknown failure kind '{}'", s));
}

MockReply parse_reply(const json& j) {
  if (!j.is_object()) throw UsageError("mock script: reply must be an object");
  if (j.contains("text")) {
    if (!j["text"].is_string()) throw UsageError("mock script: reply text must be a string");
    return MockReply::ok(j["text"].get<std::string>());
  }
  if (j.contains("fail")) return MockReply::fail(parse_failure_kind(j["fail"].get<std::string>()));
  throw UsageError("mock script: reply needs 'text' or 'fail'");
}

}  // namespace

MockScript parse_mock_script(const json& j) {
  if (!j.is_object()) throw UsageError("mock script must be a JSON object");
  MockScript script;
  try {
    for (const auto& r : j.value("rules", json::array())) {
      MockRule rule;
      if (r.contains("contains")) {
        const auto& c = r["contains"];
        if (c.is_string()) {
          rule.contains.push_back(c.get<std::string>());
        } else {
          rule.contains = c.get<std::vector<std::string>>();
        }
      }
      rule.key_glob = r.value("key", "");
      for (const auto& reply : r.value("replies", json::array())) rule.replies.push_back(parse_reply(reply));
      if (rule.replies.empty()) throw UsageError("mock script: rule without replies");
      const std::string ex = r.value("exhausted", "repeat_last");
      if (ex == "repeat_last") {
        rule.exhausted = MockRule::Exhausted::repeat_last;
      } else if (ex == "cycle") {
        rule.exhausted = MockRule::Exhausted::cycle;
      } else if (ex == "skip") {
        rule.exhausted = MockRule::Exhausted::skip;
      } else {
        throw UsageError(fmt::format("mock script: unknown exhausted mode '{}'", ex));
      }
      script.rules.push_back(std::move(rule));
    }
    if (j.contains("fallback")) script.fallback = parse_reply(j["fallback"]);
    script.latency = std::chrono::milliseconds(j.value("latency_ms", 0));
  } catch (const json::exception& e) {
    throw UsageError(fmt::format("mock script: {}", e.what()));
  }
  if (script.rules.empty() && !script.fallback) throw UsageError("mock script is empty");
  return script;
}

MockScript load_mock_script(const std::filesystem::path& path) {
  try {
    return parse_mock_script(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw UsageError(fmt::format("mock script {}: {}", path.string(), e.what()));
  }
}

MockBackend::MockBackend(MockScript script)
    : script_(std::move(script)), cursor_(script_.rules.size(), 0) {}

MockReply MockBackend::respond(const CompletionRequest& request) {
  const std::string haystack = request.system_text + "\n" + request.user_text;
  std::optional<MockReply> reply;
  {
    std::lock_guard lock(mu_);
    ++calls_;
    ++in_flight_;
    max_in_flight_ = std::max(max_in_flight_, in_flight_);
    for (std::size_t i = 0; i < script_.rules.size() && !reply; ++i) {
      const auto& rule = script_.rules[i];
      bool match = rule.key_glob.empty() ||
                   fnmatch(rule.key_glob.c_str(), request.trace_key.c_str(), 0) == 0;
      for (const auto& needle : rule.contains) {
        if (!match) break;
        match = haystack.find(needle) != std::string::npos;
      }
      if (!match) continue;
      auto& cur = cursor_[i];
      if (cur < rule.replies.size()) {
        reply = rule.replies[cur++];
      } else if (rule.exhausted == MockRule::Exhausted::repeat_last) {
        reply = rule.replies.back();
      } else if (rule.exhausted == MockRule::Exhausted::cycle) {
        cur = 1;
        reply = rule.replies.front();
      }
    }
    if (!reply) reply = script_.fallback;
    TranscriptEntry entry{request.trace_key, sha256_hex(haystack), ""};
    if (!reply) {
      entry.reply = "<unmatched>";
    } else if (reply->text) {
      entry.reply = *reply->text;
    } else {
      entry.reply = fmt::format("<fail:{}>", to_string(*reply->failure));
    }
    transcript_.push_back(std::move(entry));
  }
  if (script_.latency.count() > 0) std::this_thread::sleep_for(script_.latency);
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  if (!reply) {
    throw UnmatchedRequest(fmt::format("mock: unmatched request '{}'", request.trace_key));
  }
  return *reply;
}

std::size_t MockBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t MockBackend::max_concurrent() const {
  std::lock_guard lock(mu_);
  return max_in_flight_;
}

std::vector<TranscriptEntry> MockBackend::transcript() const {
  std::lock_guard lock(mu_);
  return transcript_;
}

void BackendConfig::validate() const {
  if (name.empty()) throw UsageError("backend name must not be empty");
  if (temperature < 0.0) throw UsageError(fmt::format("backend {}: temperature must be >= 0", name));
  if (max_retries < 0) throw UsageError(fmt::format("backend {}: max_retries must be >= 0", name));
  if (max_in_flight == 0) throw UsageError(fmt::format("backend {}: max_in_flight must be positive", name));
  if (kind == Kind::http && endpoint.empty()) {
    throw UsageError(fmt::format("backend {}: http backend needs an endpoint", name));
  }
  if (kind == Kind::mock && !mock) throw UsageError(fmt::format("backend {}: mock has no script", name));
}

BackendConfig make_mock(MockScript script, std::string name, std::string model_name) {
  if (script.rules.empty() && !script.fallback) throw UsageError("mock script is empty");
  BackendConfig cfg;
  cfg.kind = BackendConfig::Kind::mock;
  cfg.name = std::move(name);
  cfg.model_name = std::move(model_name);
  cfg.backoff_base = std::chrono::milliseconds(0);
  cfg.mock = std::make_shared<MockBackend>(std::move(script));
  return cfg;
}

std::string api_key_env_var(const std::string& backend_name) {
  std::string suffix;
  for (char c : backend_name) {
    suffix += std::isalnum(static_cast<unsigned char>(c))
                  ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                  : '_';
  }
  return "REVIEW_ARCADE_API_KEY_" + suffix;
}

std::optional<std::string> lookup_api_key(const std::string& backend_name) {
  for (const std::string& var : {api_key_env_var(backend_name), std::string("REVIEW_ARCADE_API_KEY")}) {
    if (const char* v = std::getenv(var.c_str()); v && *v) return std::string(v);
  }
  return std::nullopt;
}

namespace {

class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::size_t limit) : limit_(limit) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      --active_;
    }
    cv_.notify_one();
  }

 private:
  std::size_t limit_;
  std::size_t active_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

InFlightLimiter& limiter_for(const BackendConfig& config) {
  static std::mutex mu;
  static std::map<std::string, std::unique_ptr<InFlightLimiter>> registry;
  const auto key = fmt::format("{}#{}", config.name, config.max_in_flight);
  std::lock_guard lock(mu);
  auto& slot = registry[key];
  if (!slot) slot = std::make_unique<InFlightLimiter>(config.max_in_flight);
  return *slot;
}

class SlotGuard {
 public:
  explicit SlotGuard(InFlightLimiter& l) : l_(l) { l_.acquire(); }
  ~SlotGuard() { l_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  InFlightLimiter& l_;
};

std::chrono::milliseconds backoff_delay(const BackendConfig& config, int attempt) {
  if (config.backoff_base.count() == 0) return std::chrono::milliseconds(0);
  thread_local std::mt19937 rng(std::random_device{}());
  std::uniform_real_distribution<double> jitter(0.5, 1.0);
  const double ms = static_cast<double>(config.backoff_base.count()) * std::pow(2.0, attempt - 1) * jitter(rng);
  return std::chrono::milliseconds(static_cast<long long>(ms));
}

std::string attempt_once(const BackendConfig& config, const CompletionRequest& request,
                         const std::optional<std::string>& api_key, Usage& usage) {
  if (config.kind == BackendConfig::Kind::mock) {
    auto reply = config.mock->respond(request);
    if (reply.failure) {
      throw detail::AttemptFailure{*reply.failure, fmt::format("scripted {}", to_string(*reply.failure))};
    }
    usage.prompt_tokens = request.system_text.size() / 4 + request.user_text.size() / 4;
    usage.completion_tokens = reply.text->size() / 4;
    return *reply.text;
  }
  return detail::http_chat_completion(config, request, *api_key, usage);
}

}  // namespace

CompletionResult complete(const BackendConfig& config, const CompletionRequest& request) {
  config.validate();
  if (request.user_text.empty()) throw UsageError("completion request with empty user text");
  std::optional<std::string> api_key;
  if (config.kind == BackendConfig::Kind::http) {
    api_key = lookup_api_key(config.name);
    if (!api_key) {
      throw UsageError(fmt::format("backend {}: no API key; set {} or REVIEW_ARCADE_API_KEY",
                                   config.name, api_key_env_var(config.name)));
    }
  }
  auto& limiter = limiter_for(config);
  const int max_attempts = config.max_retries + 1;
  for (int attempt = 1;; ++attempt) {
    try {
      CompletionResult result;
      {
        SlotGuard slot(limiter);
        result.text = attempt_once(config, request, api_key, result.usage);
      }
      result.attempts = attempt;
      result.backend_id = config.name;
      return result;
    } catch (const detail::AttemptFailure& f) {
      if (f.kind == FailureKind::client_error) {
        throw RequestError(fmt::format("backend {}: {}", config.name, f.message));
      }
      if (attempt >= max_attempts) {
        const auto msg = fmt::format("backend {}: giving up after {} attempt(s): {}", config.name,
                                     attempt, f.message);
        if (f.kind == FailureKind::timeout) throw TimeoutError(msg);
        throw TransportError(msg);
      }
    }
    std::this_thread::sleep_for(backoff_delay(config, attempt));
  }
}

}  // namespace review_arcade
