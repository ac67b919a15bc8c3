#pragma once

// Structured review generation: render a review prompt for a submission,
// call a backend, and parse/repair the returned JSON object.

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "review_arcade/corpus.hpp"
#include "review_arcade/model_gateway.hpp"
#include "review_arcade/prompt_registry.hpp"

namespace review_arcade {

inline constexpr double kScoreMin = 1.0;
inline constexpr double kScoreMax = 5.0;
inline constexpr int kDefaultParseRetries = 2;

/// Fields recovered from one model answer. Scores hold numeric values
/// only; null or non-numeric entries are absent. A categorical
/// Acceptance ("Accept"/"Reject") lands in acceptance_label instead.
struct ParsedReview {
  std::map<std::string, double> scores;
  std::optional<std::string> acceptance_label;
  std::vector<std::string> strengths;
  std::vector<std::string> weaknesses;

  std::optional<double> overall() const;
  friend bool operator==(const ParsedReview&, const ParsedReview&) = default;
};

struct GeneratedReview {
  std::string paper_id;
  std::string prompt_name;
  std::string model_name;
  int run_index = 0;
  ParsedReview parsed;
  std::string raw_text;  // last model answer, verbatim
  bool valid = false;
  std::string failure_reason;
  int attempts = 0;  // generations spent, parse retries included
  std::vector<std::string> validation_log;

  std::optional<double> overall() const { return valid ? parsed.overall() : std::nullopt; }
  // Valid and carries an Overall score, i.e. usable for metrics.
  bool scorable() const { return overall().has_value(); }

  friend bool operator==(const GeneratedReview&, const GeneratedReview&) = default;
};

/// Finds the first well-formed JSON object carrying a "Scores" field
/// (any case), skipping prose and code fences around it. Trailing commas
/// are tolerated. Throws ParseError if none exists.
ParsedReview parse_review_text(const std::string& text);

// Inverse of parse_review_text for valid values: the model-output JSON form.
std::string serialize_review_text(const ParsedReview& review);

/// Clamps numeric scores to [1, 5]; with `snap`, rounds to the nearest 0.5
/// with ties going up. Each adjustment is appended to `log`. Idempotent.
ParsedReview validate_scores(ParsedReview review, bool snap, std::vector<std::string>* log = nullptr);

// Markdown rendering used as `${review}` in edit and judge prompts.
std::string format_review_for_prompt(const ParsedReview& review);

struct ReviewOptions {
  int parse_retries = kDefaultParseRetries;
  bool snap = false;
  std::optional<double> temperature;
  // Prefix for mock/trace keys; "/attempt<a>" is appended per generation.
  // Defaults to "review/<prompt>/<paper>/run<k>".
  std::string trace_prefix;
};

/// Generates one review. Unparseable output is retried up to
/// `parse_retries` times, then returned with valid == false. Transport
/// failures propagate as exceptions.
GeneratedReview generate_review(const BackendConfig& backend, const PromptRegistry& registry,
                                const std::string& prompt_name, const Submission& submission, int run_index,
                                const ReviewOptions& options = {});

nlohmann::json review_to_json(const GeneratedReview& review);
GeneratedReview review_from_json(const nlohmann::json& j);

/// Append-only line-delimited review file. Records are journaled as they
/// complete; finalize() rewrites the file sorted by (paper_id, run_index)
/// so that an interrupted-and-resumed run ends byte-identical to an
/// uninterrupted one. A truncated trailing line is ignored on load.
class ReviewJournal {
 public:
  explicit ReviewJournal(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }
  std::vector<GeneratedReview> load() const;
  bool contains(const std::string& paper_id, int run_index) const;
  void append(const GeneratedReview& review);
  void finalize();
  // Lines skipped on load because they did not parse.
  std::size_t skipped_lines() const { return skipped_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, int>, GeneratedReview> records_;
  std::size_t skipped_ = 0;
};

}  // namespace review_arcade
