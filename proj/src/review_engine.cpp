#include "review_arcade/review_engine.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <fmt/format.h>

#include "review_arcade/error.hpp"
#include "review_arcade/json_scan.hpp"
#include "review_arcade/util.hpp"

namespace review_arcade {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 6> kKnownScoreKeys{"Overall", "Soundness", "Acceptance",
                                                          "Confidence", "Excitement", "Reproducibility"};

std::string canonical_score_key(const std::string& key) {
  const auto folded = fold_key(key);
  for (auto known : kKnownScoreKeys) {
    if (fold_key(known) == folded) return std::string(known);
  }
  return key;
}

std::optional<std::string> acceptance_label(std::string_view s) {
  const auto f = fold_key(trim(s));
  if (f == "accept" || f == "accepted") return "Accept";
  if (f == "reject" || f == "rejected") return "Reject";
  return std::nullopt;
}

std::string strip_bullet(std::string line) {
  line = trim(line);
  for (std::string_view b : {"- ", "* ", "\xE2\x80\xA2 "}) {
    if (line.rfind(b, 0) == 0) return trim(line.substr(b.size()));
  }
  return line;
}

std::vector<std::string> coerce_list(const json* v) {
  std::vector<std::string> out;
  if (!v || v->is_null()) return out;
  auto push = [&](const json& item) {
    if (item.is_null()) return;
    auto s = item.is_string() ? item.get<std::string>() : item.dump();
    if (!trim(s).empty()) out.push_back(std::move(s));
  };
  if (v->is_array()) {
    for (const auto& item : *v) push(item);
  } else if (v->is_string()) {
    for (const auto& line : split_lines(v->get<std::string>())) {
      auto item = strip_bullet(line);
      if (!item.empty()) out.push_back(std::move(item));
    }
  } else if (v->is_object()) {
    for (const auto& [k, item] : v->items()) {
      out.push_back(k + ": " + (item.is_string() ? item.get<std::string>() : item.dump()));
    }
  } else {
    push(*v);
  }
  return out;
}

ParsedReview from_object(const json& obj) {
  const json* scores = find_key_folded(obj, "Scores");
  if (!scores->is_object()) throw ParseError("Scores field is not an object");
  ParsedReview out;
  for (const auto& [raw_key, value] : scores->items()) {
    const auto key = canonical_score_key(raw_key);
    if (value.is_number()) {
      out.scores[key] = value.get<double>();
    } else if (value.is_string()) {
      const auto s = value.get<std::string>();
      if (auto num = parse_number(s)) {
        out.scores[key] = *num;
      } else if (key == "Acceptance") {
        out.acceptance_label = acceptance_label(s);
      }
    }
  }
  out.strengths = coerce_list(find_key_folded(obj, "Strengths"));
  out.weaknesses = coerce_list(find_key_folded(obj, "Weaknesses"));
  return out;
}

std::string format_score(double v) { return fmt::format("{}", v); }

// Model output is not guaranteed to be valid UTF-8.
std::string dump_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n"; }

}  // namespace

std::optional<double> ParsedReview::overall() const {
  auto it = scores.find("Overall");
  if (it == scores.end()) return std::nullopt;
  return it->second;
}

ParsedReview parse_review_text(const std::string& text) {
  bool saw_object = false;
  auto doc = find_json_object(text, [](const json& j) { return find_key_folded(j, "Scores") != nullptr; },
                              &saw_object);
  if (doc) return from_object(*doc);
  throw ParseError(saw_object ? "JSON object lacks a Scores field" : "no JSON object found in model output");
}

std::string serialize_review_text(const ParsedReview& review) {
  json scores = json::object();
  for (const auto& [k, v] : review.scores) scores[k] = v;
  if (review.acceptance_label) scores["Acceptance"] = *review.acceptance_label;
  return json{{"Scores", scores}, {"Strengths", review.strengths}, {"Weaknesses", review.weaknesses}}.dump();
}

ParsedReview validate_scores(ParsedReview review, bool snap, std::vector<std::string>* log) {
  for (auto it = review.scores.begin(); it != review.scores.end();) {
    const double raw = it->second;
    if (!std::isfinite(raw)) {
      if (log) log->push_back(fmt::format("{}: non-finite value dropped", it->first));
      it = review.scores.erase(it);
      continue;
    }
    double v = std::clamp(raw, kScoreMin, kScoreMax);
    if (snap) v = std::floor(v * 2.0 + 0.5) / 2.0;
    if (v != raw && log) {
      log->push_back(fmt::format("{}: {} -> {}", it->first, format_score(raw), format_score(v)));
    }
    it->second = v;
    ++it;
  }
  return review;
}

std::string format_review_for_prompt(const ParsedReview& review) {
  std::string out = "## Scores\n";
  for (const auto& [k, v] : review.scores) out += fmt::format("- {}: {}\n", k, format_score(v));
  if (review.acceptance_label) out += fmt::format("- Acceptance: {}\n", *review.acceptance_label);
  out += "\n## Summary of Strengths\n";
  for (const auto& s : review.strengths) out += "- " + s + "\n";
  out += "\n## Summary of Weaknesses\n";
  for (const auto& w : review.weaknesses) out += "- " + w + "\n";
  return out;
}

GeneratedReview generate_review(const BackendConfig& backend, const PromptRegistry& registry,
                                const std::string& prompt_name, const Submission& submission, int run_index,
                                const ReviewOptions& options) {
  if (trim(submission.body).empty()) {
    throw UsageError(fmt::format("paper {} has an empty body", submission.id));
  }
  if (options.parse_retries < 0) throw UsageError("parse_retries must be >= 0");
  const auto& spec = registry.get_prompt(prompt_name);
  if (spec.kind != PromptKind::review) throw UsageError(fmt::format("'{}' is not a review prompt", prompt_name));
  const auto rendered = registry.render(spec, {{"paper", submission.body}});
  const auto prefix = options.trace_prefix.empty()
                          ? fmt::format("review/{}/{}/run{}", prompt_name, submission.id, run_index)
                          : options.trace_prefix;

  GeneratedReview out;
  out.paper_id = submission.id;
  out.prompt_name = prompt_name;
  out.model_name = backend.model_name;
  out.run_index = run_index;
  for (int attempt = 1; attempt <= options.parse_retries + 1; ++attempt) {
    CompletionRequest request;
    request.system_text = rendered.system_text;
    request.user_text = rendered.user_text;
    request.temperature = options.temperature;
    request.trace_key = fmt::format("{}/attempt{}", prefix, attempt);
    const auto result = complete(backend, request);
    out.raw_text = result.text;
    out.attempts = attempt;
    try {
      out.parsed = validate_scores(parse_review_text(result.text), options.snap, &out.validation_log);
      out.valid = true;
      out.failure_reason.clear();
      return out;
    } catch (const ParseError& e) {
      out.failure_reason = e.what();
    }
  }
  out.failure_reason = fmt::format("unparseable after {} attempt(s): {}", out.attempts, out.failure_reason);
  return out;
}

json review_to_json(const GeneratedReview& r) {
  json j = {{"paper_id", r.paper_id},
            {"prompt", r.prompt_name},
            {"model", r.model_name},
            {"run_index", r.run_index},
            {"valid", r.valid},
            {"scores", r.parsed.scores},
            {"strengths", r.parsed.strengths},
            {"weaknesses", r.parsed.weaknesses},
            {"raw_text", r.raw_text},
            {"attempts", r.attempts},
            {"validation_log", r.validation_log}};
  if (r.parsed.acceptance_label) j["acceptance_label"] = *r.parsed.acceptance_label;
  if (!r.failure_reason.empty()) j["failure_reason"] = r.failure_reason;
  return j;
}

GeneratedReview review_from_json(const json& j) {
  GeneratedReview r;
  r.paper_id = j.at("paper_id").get<std::string>();
  r.prompt_name = j.at("prompt").get<std::string>();
  r.model_name = j.at("model").get<std::string>();
  r.run_index = j.at("run_index").get<int>();
  r.valid = j.at("valid").get<bool>();
  r.parsed.scores = j.at("scores").get<std::map<std::string, double>>();
  r.parsed.strengths = j.at("strengths").get<std::vector<std::string>>();
  r.parsed.weaknesses = j.at("weaknesses").get<std::vector<std::string>>();
  if (j.contains("acceptance_label")) r.parsed.acceptance_label = j["acceptance_label"].get<std::string>();
  r.raw_text = j.at("raw_text").get<std::string>();
  r.attempts = j.at("attempts").get<int>();
  r.validation_log = j.value("validation_log", std::vector<std::string>{});
  r.failure_reason = j.value("failure_reason", "");
  return r;
}

ReviewJournal::ReviewJournal(fs::path path) : path_(std::move(path)) {
  if (!fs::exists(path_)) return;
  const auto text = read_file(path_);
  for (const auto& line : split_lines(text)) {
    if (trim(line).empty()) continue;
    try {
      auto r = review_from_json(json::parse(line));
      records_[{r.paper_id, r.run_index}] = std::move(r);
    } catch (const json::exception&) {
      ++skipped_;
    }
  }
  if (skipped_ > 0 || (!text.empty() && text.back() != '\n')) {
    // drop the torn tail so later appends start on a clean line
    std::string clean;
    for (const auto& [key, r] : records_) clean += dump_line(review_to_json(r));
    write_file_atomic(path_, clean);
  }
}

std::vector<GeneratedReview> ReviewJournal::load() const {
  std::lock_guard lock(mu_);
  std::vector<GeneratedReview> out;
  for (const auto& [key, r] : records_) out.push_back(r);
  return out;
}

bool ReviewJournal::contains(const std::string& paper_id, int run_index) const {
  std::lock_guard lock(mu_);
  return records_.count({paper_id, run_index}) > 0;
}

void ReviewJournal::append(const GeneratedReview& review) {
  std::lock_guard lock(mu_);
  records_[{review.paper_id, review.run_index}] = review;
  fs::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << dump_line(review_to_json(review));
  out.flush();
  if (!out) throw Error(fmt::format("cannot append to {}", path_.string()));
}

void ReviewJournal::finalize() {
  std::lock_guard lock(mu_);
  std::string text;
  for (const auto& [key, r] : records_) text += dump_line(review_to_json(r));
  write_file_atomic(path_, text);
}

}  // namespace review_arcade
