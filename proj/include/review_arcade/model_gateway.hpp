#pragma once

// Uniform access to chat-completion backends: OpenAI-compatible HTTP
// endpoints and a scripted, deterministic mock.
//
// complete() retries transient failures (network errors, HTTP 429/5xx,
// timeouts) with jittered exponential backoff, and never lets more than
// `max_in_flight` calls run at once for a given backend name anywhere in
// the process.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "review_arcade/error.hpp"

namespace review_arcade {

class TransportError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

// Non-retryable rejection (HTTP 4xx other than 408/429).
class RequestError : public Error {
 public:
  using Error::Error;
};

// The mock had no rule for the request and no fallback.
class UnmatchedRequest : public RequestError {
 public:
  using RequestError::RequestError;
};

struct Usage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct CompletionRequest {
  std::string system_text;
  std::string user_text;
  std::optional<double> temperature;
  std::optional<int> max_tokens;
  // Names the request for logs and mock matching; never sent over the wire.
  std::string trace_key;
};

struct CompletionResult {
  std::string text;
  Usage usage;
  int attempts = 1;
  std::string backend_id;
};

enum class FailureKind { transient, rate_limited, timeout, client_error };

std::string_view to_string(FailureKind k);

struct MockReply {
  std::optional<std::string> text;
  std::optional<FailureKind> failure;

  static MockReply ok(std::string t) { return {std::move(t), std::nullopt}; }
  static MockReply fail(FailureKind k) { return {std::nullopt, k}; }
};

/// One scripted rule. A request matches when every `contains` substring
/// occurs in system_text + "\n" + user_text and `key_glob` (fnmatch
/// syntax, empty = any) matches the trace key. Replies are consumed in
/// order; once exhausted the rule repeats its last reply, cycles, or stops
/// matching, per `exhausted`.
struct MockRule {
  enum class Exhausted { repeat_last, cycle, skip };
  std::vector<std::string> contains;
  std::string key_glob;
  std::vector<MockReply> replies;
  Exhausted exhausted = Exhausted::repeat_last;
};

struct MockScript {
  std::vector<MockRule> rules;
  std::optional<MockReply> fallback;
  std::chrono::milliseconds latency{0};
};

/// JSON form:
///   {"rules": [{"contains": [...], "key": "glob", "replies": [{"text": ...} | {"fail": "transient"}],
///               "exhausted": "repeat_last"|"cycle"|"skip"}],
///    "fallback": {"text": ...}, "latency_ms": 0}
/// Throws UsageError on schema violations.
MockScript parse_mock_script(const nlohmann::json& j);
MockScript load_mock_script(const std::filesystem::path& path);

struct TranscriptEntry {
  std::string trace_key;
  std::string request_digest;  // sha256 of system + user text
  std::string reply;           // text, or "<fail:kind>"

  friend bool operator==(const TranscriptEntry&, const TranscriptEntry&) = default;
};

/// Scripted backend state. Thread-safe; records a transcript of every call
/// and the peak number of concurrent calls it observed.
class MockBackend {
 public:
  explicit MockBackend(MockScript script);

  MockReply respond(const CompletionRequest& request);

  std::size_t calls() const;
  std::size_t max_concurrent() const;
  std::vector<TranscriptEntry> transcript() const;

 private:
  MockScript script_;
  mutable std::mutex mu_;
  std::vector<std::size_t> cursor_;
  std::size_t calls_ = 0;
  std::size_t in_flight_ = 0;
  std::size_t max_in_flight_ = 0;
  std::vector<TranscriptEntry> transcript_;
};

struct BackendConfig {
  enum class Kind { http, mock };

  Kind kind = Kind::mock;
  std::string name = "mock";
  std::string endpoint;  // http only, e.g. "http://localhost:8000/v1"
  std::string model_name = "mock-model";
  double temperature = 1.0;
  int max_tokens = 4096;
  int max_retries = 3;
  std::chrono::milliseconds timeout{120'000};
  std::size_t max_in_flight = 4;
  std::chrono::milliseconds backoff_base{1000};
  std::shared_ptr<MockBackend> mock;

  // Throws UsageError when fields are inconsistent.
  void validate() const;
};

BackendConfig make_mock(MockScript script, std::string name = "mock",
                        std::string model_name = "mock-model");

// Env var holding the key: REVIEW_ARCADE_API_KEY_<NAME> if set, otherwise
// REVIEW_ARCADE_API_KEY. NAME is the backend name upper-cased with
// non-alphanumerics replaced by '_'.
std::string api_key_env_var(const std::string& backend_name);
std::optional<std::string> lookup_api_key(const std::string& backend_name);

/// Sends one chat completion. Throws TransportError when retries are
/// exhausted (TimeoutError if the last attempt timed out), RequestError
/// for non-retryable rejections, UsageError for invalid configuration or a
/// missing API key.
CompletionResult complete(const BackendConfig& config, const CompletionRequest& request);

namespace detail {

// Failure raised by a transport for complete() to classify.
struct AttemptFailure {
  FailureKind kind;
  std::string message;
};

std::string http_chat_completion(const BackendConfig& config, const CompletionRequest& request,
                                 const std::string& api_key, Usage& usage);

nlohmann::json chat_request_body(const BackendConfig& config, const CompletionRequest& request);

}  // namespace detail

}  // namespace review_arcade
