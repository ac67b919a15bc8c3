#include "review_arcade/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "review_arcade/error.hpp"
#include "review_arcade/stats.hpp"
#include "review_arcade/util.hpp"

namespace review_arcade {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Split s) { return s == Split::Accepted ? "accepted" : "rejected"; }

std::optional<Split> parse_split(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "accepted" || lower == "accept") return Split::Accepted;
  if (lower == "rejected" || lower == "reject") return Split::Rejected;
  return std::nullopt;
}

std::string_view to_string(LoadIssue::Kind k) {
  switch (k) {
    case LoadIssue::Kind::missing_body: return "missing body file";
    case LoadIssue::Kind::empty_body: return "empty body";
    case LoadIssue::Kind::duplicate_id: return "duplicate id";
    case LoadIssue::Kind::unknown_split: return "unknown split";
    case LoadIssue::Kind::malformed_reviews_file: return "malformed reviews file";
    case LoadIssue::Kind::malformed_review: return "malformed review record";
    case LoadIssue::Kind::off_grid_score: return "off-grid score";
  }
  return "unknown";
}

bool on_review_grid(double v) {
  if (!std::isfinite(v) || v < 1.0 || v > 5.0) return false;
  const double twice = v * 2.0;
  return twice == std::round(twice);
}

std::size_t count_whitespace_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : text) {
    const bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!ws && !in_token) ++n;
    in_token = !ws;
  }
  return n;
}

std::size_t TokenCounter::count(std::string_view text) const {
  const std::size_t ws = count_whitespace_tokens(text);
  if (mode == Mode::whitespace) return ws;
  return static_cast<std::size_t>(std::ceil(static_cast<double>(ws) * multiplier));
}

const Submission* Corpus::find(std::string_view id) const {
  for (const auto& s : submissions) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

const std::vector<HumanReview>& Corpus::reviews_for(std::string_view id) const {
  static const std::vector<HumanReview> kNone;
  auto it = reviews.find(std::string(id));
  return it == reviews.end() ? kNone : it->second;
}

std::size_t Corpus::review_count() const {
  std::size_t n = 0;
  for (const auto& [id, list] : reviews) n += list.size();
  return n;
}

namespace {

class Loader {
 public:
  Loader(const fs::path& root, const LoadOptions& options) : root_(root), options_(options) {}

  Corpus run() {
    const auto manifest_path = root_ / "manifest.json";
    if (!fs::exists(manifest_path)) {
      throw CorpusError(fmt::format("manifest not found: {}", manifest_path.string()));
    }
    json manifest;
    try {
      manifest = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
      throw CorpusError(fmt::format("malformed manifest {}: {}", manifest_path.string(), e.what()));
    }
    if (!manifest.is_array()) throw CorpusError("manifest must be a JSON array");

    std::set<std::string> seen;
    for (const auto& entry : manifest) {
      if (!entry.is_object() || !entry.contains("id") || !entry["id"].is_string() ||
          entry["id"].get<std::string>().empty()) {
        throw CorpusError(fmt::format("manifest entry without a string id: {}", entry.dump()));
      }
      load_entry(entry, seen);
    }
    for (const auto& s : corpus_.submissions) {
      if (corpus_.is_reviewless(s.id)) {
        corpus_.warnings.push_back(fmt::format("paper {} has no human reviews", s.id));
      }
    }
    return std::move(corpus_);
  }

 private:
  void report(LoadIssue::Kind kind, const std::string& id, std::string message) {
    if (options_.strict) {
      throw CorpusError(fmt::format("{} ({}): {}", to_string(kind), id, message));
    }
    corpus_.issues.push_back({kind, id, std::move(message)});
  }

  void load_entry(const json& entry, std::set<std::string>& seen) {
    Submission sub;
    sub.id = entry["id"].get<std::string>();
    if (seen.count(sub.id)) {
      report(LoadIssue::Kind::duplicate_id, sub.id, "id already loaded; entry skipped");
      return;
    }
    const std::string split_text = entry.value("split", "");
    auto split = parse_split(split_text);
    if (!split) {
      report(LoadIssue::Kind::unknown_split, sub.id, fmt::format("split '{}'", split_text));
      return;
    }
    sub.split = *split;
    if (entry.contains("metadata") && entry["metadata"].is_object()) {
      for (const auto& [k, v] : entry["metadata"].items()) {
        sub.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
    const fs::path dir = root_ / entry.value("path", sub.id);
    const auto body_path = dir / "paper.md";
    if (!fs::exists(body_path)) {
      report(LoadIssue::Kind::missing_body, sub.id, body_path.string());
      return;
    }
    sub.body = read_file(body_path);
    if (trim(sub.body).empty()) {
      report(LoadIssue::Kind::empty_body, sub.id, body_path.string());
      return;
    }
    sub.token_count = options_.counter.count(sub.body);
    seen.insert(sub.id);

    auto& reviews = corpus_.reviews[sub.id];
    const auto reviews_path = dir / "reviews.json";
    if (fs::exists(reviews_path)) load_reviews(sub.id, reviews_path, reviews);
    if (reviews.empty()) corpus_.reviews.erase(sub.id);
    corpus_.submissions.push_back(std::move(sub));
  }

  void load_reviews(const std::string& id, const fs::path& path, std::vector<HumanReview>& out) {
    json doc;
    try {
      doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
      report(LoadIssue::Kind::malformed_reviews_file, id, e.what());
      return;
    }
    if (!doc.is_array()) {
      report(LoadIssue::Kind::malformed_reviews_file, id, "reviews.json must be an array");
      return;
    }
    for (std::size_t i = 0; i < doc.size(); ++i) {
      if (auto review = parse_review(id, i, doc[i])) out.push_back(std::move(*review));
    }
  }

  std::optional<std::vector<std::string>> string_list(const json& rec, const char* key) {
    std::vector<std::string> items;
    if (!rec.contains(key)) return items;
    const auto& v = rec[key];
    if (!v.is_array()) return std::nullopt;
    for (const auto& item : v) {
      if (!item.is_string()) return std::nullopt;
      items.push_back(item.get<std::string>());
    }
    return items;
  }

  std::optional<HumanReview> parse_review(const std::string& id, std::size_t index, const json& rec) {
    const auto where = fmt::format("review #{}", index);
    if (!rec.is_object() || !rec.contains("scores") || !rec["scores"].is_object()) {
      report(LoadIssue::Kind::malformed_review, id, where + ": missing scores object");
      return std::nullopt;
    }
    if (rec.contains("paper_id") && rec["paper_id"] != id) {
      report(LoadIssue::Kind::malformed_review, id, where + ": paper_id does not match manifest");
      return std::nullopt;
    }
    HumanReview review;
    review.paper_id = id;
    for (const auto& [key, value] : rec["scores"].items()) {
      if (!value.is_number()) {
        report(LoadIssue::Kind::malformed_review, id,
               fmt::format("{}: score {} is not numeric", where, key));
        return std::nullopt;
      }
      const double v = value.get<double>();
      if (!on_review_grid(v)) {
        report(LoadIssue::Kind::off_grid_score, id, fmt::format("{}: {}={}", where, key, v));
        return std::nullopt;
      }
      review.scores[key] = v;
    }
    if (!review.scores.count("Overall")) {
      report(LoadIssue::Kind::malformed_review, id, where + ": scores lack Overall");
      return std::nullopt;
    }
    auto strengths = string_list(rec, "strengths");
    auto weaknesses = string_list(rec, "weaknesses");
    if (!strengths || !weaknesses) {
      report(LoadIssue::Kind::malformed_review, id,
             where + ": strengths/weaknesses must be string arrays");
      return std::nullopt;
    }
    review.strengths = std::move(*strengths);
    review.weaknesses = std::move(*weaknesses);
    return review;
  }

  fs::path root_;
  LoadOptions options_;
  Corpus corpus_;
};

}  // namespace

Corpus load_corpus(const fs::path& root, const LoadOptions& options) {
  return Loader(root, options).run();
}

void save_corpus(const Corpus& corpus, const fs::path& root) {
  json manifest = json::array();
  std::set<std::string> used;
  for (const auto& sub : corpus.submissions) {
    std::string dir = "papers/" + sanitize_component(sub.id);
    for (int k = 1; used.count(dir); ++k) dir = fmt::format("papers/{}_{}", sanitize_component(sub.id), k);
    used.insert(dir);

    json entry = {{"id", sub.id}, {"split", to_string(sub.split)}, {"path", dir}};
    if (!sub.metadata.empty()) entry["metadata"] = sub.metadata;
    manifest.push_back(entry);

    write_file_atomic(root / dir / "paper.md", sub.body);
    json reviews = json::array();
    for (const auto& r : corpus.reviews_for(sub.id)) {
      reviews.push_back({{"paper_id", r.paper_id},
                         {"scores", r.scores},
                         {"strengths", r.strengths},
                         {"weaknesses", r.weaknesses}});
    }
    write_file_atomic(root / dir / "reviews.json", reviews.dump(2) + "\n");
  }
  write_file_atomic(root / "manifest.json", manifest.dump(2) + "\n");
}

Corpus filter_papers(const Corpus& corpus, std::size_t max_tokens, bool drop_reviewless) {
  if (max_tokens == 0) throw UsageError("filter_papers: max_tokens must be positive");
  Corpus out;
  out.issues = corpus.issues;
  out.warnings = corpus.warnings;
  for (const auto& sub : corpus.submissions) {
    if (sub.token_count > max_tokens) continue;
    if (trim(sub.body).empty()) continue;
    if (drop_reviewless && corpus.is_reviewless(sub.id)) continue;
    out.submissions.push_back(sub);
    if (auto it = corpus.reviews.find(sub.id); it != corpus.reviews.end()) {
      out.reviews.insert(*it);
    }
  }
  if (out.submissions.empty() && !corpus.submissions.empty()) {
    out.warnings.push_back(fmt::format("length filter ({} tokens) removed every paper", max_tokens));
  }
  return out;
}

CorpusSummary summarize(const Corpus& corpus) {
  if (corpus.submissions.empty()) throw UndefinedMetric("summarize: empty corpus");
  CorpusSummary summary;
  std::size_t lo = corpus.submissions.front().token_count, hi = lo;
  for (const auto& s : corpus.submissions) {
    lo = std::min(lo, s.token_count);
    hi = std::max(hi, s.token_count);
  }
  // integer counts: half-open range [lo, hi + 1)
  summary.bin_lo = static_cast<double>(lo);
  summary.bin_width = static_cast<double>(hi + 1 - lo) / static_cast<double>(kHistogramBins);

  for (Split split : kSplits) {
    auto& out = split == Split::Accepted ? summary.accepted : summary.rejected;
    std::vector<double> counts;
    for (const auto& s : corpus.submissions) {
      if (s.split != split) continue;
      counts.push_back(static_cast<double>(corpus.reviews_for(s.id).size()));
      auto bin = static_cast<std::size_t>(
          std::floor((static_cast<double>(s.token_count) - summary.bin_lo) / summary.bin_width));
      out.length_histogram[std::min(bin, kHistogramBins - 1)] += 1;
    }
    out.n_papers = counts.size();
    if (!counts.empty()) {
      out.reviews_per_paper_mean = stats::mean(counts);
      out.reviews_per_paper_std = stats::population_sd(counts);
    }
  }
  return summary;
}

}  // namespace review_arcade
