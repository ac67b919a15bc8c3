#pragma once

// Paper + human-review dataset: loading, validation, length filtering and
// summary statistics.
//
// On-disk layout:
//   <root>/manifest.json         [{"id": ..., "split": "accepted"|"rejected", "path": ...}, ...]
//   <root>/<path>/paper.md       UTF-8 Markdown body
//   <root>/<path>/reviews.json   [{"scores": {...}, "strengths": [...], "weaknesses": [...]}, ...]

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace review_arcade {

enum class Split { Accepted, Rejected };

std::string_view to_string(Split s);
// Accepts "accepted"/"rejected" (any case) and the short forms "accept"/"reject".
std::optional<Split> parse_split(std::string_view s);

inline constexpr std::array<Split, 2> kSplits{Split::Accepted, Split::Rejected};

struct Submission {
  std::string id;
  Split split = Split::Accepted;
  std::string body;
  std::size_t token_count = 0;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const Submission&, const Submission&) = default;
};

struct HumanReview {
  std::string paper_id;
  std::map<std::string, double> scores;
  std::vector<std::string> strengths;
  std::vector<std::string> weaknesses;

  double overall() const { return scores.at("Overall"); }

  friend bool operator==(const HumanReview&, const HumanReview&) = default;
};

// True when v lies in [1, 5] and is an integer multiple of 0.5.
bool on_review_grid(double v);

/// Token counting used for the length filter and histogram. Whitespace
/// tokens by default; `subword_approx` scales the whitespace count by
/// `multiplier` (rounded up) to approximate a subword tokenizer.
struct TokenCounter {
  enum class Mode { whitespace, subword_approx };
  Mode mode = Mode::whitespace;
  double multiplier = 1.3;

  std::size_t count(std::string_view text) const;
};

std::size_t count_whitespace_tokens(std::string_view text);

struct LoadIssue {
  enum class Kind {
    missing_body,
    empty_body,
    duplicate_id,
    unknown_split,
    malformed_reviews_file,
    malformed_review,
    off_grid_score,
  };
  Kind kind;
  std::string paper_id;
  std::string message;
};

std::string_view to_string(LoadIssue::Kind k);

struct LoadOptions {
  // Abort on the first rejected record instead of reporting and continuing.
  bool strict = false;
  TokenCounter counter;
};

/// An immutable, loaded dataset. Submissions keep manifest order; reviews
/// are grouped per paper in file order.
struct Corpus {
  std::vector<Submission> submissions;
  std::map<std::string, std::vector<HumanReview>> reviews;
  std::vector<LoadIssue> issues;
  std::vector<std::string> warnings;

  const Submission* find(std::string_view id) const;
  const std::vector<HumanReview>& reviews_for(std::string_view id) const;
  bool is_reviewless(std::string_view id) const { return reviews_for(id).empty(); }
  std::size_t review_count() const;
};

/// Loads a corpus rooted at `root`. Bad records are rejected into
/// `Corpus::issues` and loading continues, unless `options.strict` is set,
/// in which case the first issue throws CorpusError. A missing or
/// malformed manifest always throws.
Corpus load_corpus(const std::filesystem::path& root, const LoadOptions& options = {});

// Writes `corpus` in the layout load_corpus() reads, one directory per paper.
void save_corpus(const Corpus& corpus, const std::filesystem::path& root);

/// Keeps submissions with token_count <= max_tokens (and, with
/// drop_reviewless, at least one review). Throws UsageError if
/// max_tokens == 0. An empty result adds a warning.
Corpus filter_papers(const Corpus& corpus, std::size_t max_tokens, bool drop_reviewless = false);

inline constexpr std::size_t kHistogramBins = 30;

struct SplitSummary {
  std::size_t n_papers = 0;
  double reviews_per_paper_mean = 0.0;
  double reviews_per_paper_std = 0.0;  // population std
  std::array<std::size_t, kHistogramBins> length_histogram{};
};

struct CorpusSummary {
  SplitSummary accepted;
  SplitSummary rejected;
  // Shared bin edges for both splits: bin k covers
  // [bin_lo + k * bin_width, bin_lo + (k + 1) * bin_width).
  double bin_lo = 0.0;
  double bin_width = 1.0;

  const SplitSummary& of(Split s) const { return s == Split::Accepted ? accepted : rejected; }
  double bin_center(std::size_t k) const { return bin_lo + (static_cast<double>(k) + 0.5) * bin_width; }
};

/// Per-split counts, review-count mean/std and a 30-bin token-length
/// histogram over [min_tokens, max_tokens + 1). Throws UndefinedMetric on
/// an empty corpus.
CorpusSummary summarize(const Corpus& corpus);

}  // namespace review_arcade
