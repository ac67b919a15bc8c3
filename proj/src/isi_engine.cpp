#include "review_arcade/isi_engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "review_arcade/util.hpp"

namespace review_arcade {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Worse: return "Worse";
    case Outcome::Equal: return "Equal";
    case Outcome::Better: return "Better";
  }
  return "unknown";
}

Outcome outcome_of(double initial, double final_score) {
  if (final_score > initial) return Outcome::Better;
  if (final_score < initial) return Outcome::Worse;
  return Outcome::Equal;
}

namespace {

std::string dump(const json& j, int indent = -1) {
  return j.dump(indent, ' ', false, json::error_handler_t::replace);
}

std::optional<double> endpoint_score(const IterationRecord& rec, const std::vector<GeneratedReview>& extra) {
  if (extra.empty()) return rec.overall;
  double sum = 0;
  int n = 0;
  if (rec.review.scorable()) {
    sum += *rec.review.overall();
    ++n;
  }
  for (const auto& r : extra) {
    if (r.scorable()) {
      sum += *r.overall();
      ++n;
    }
  }
  if (n == 0) return rec.overall;
  return sum / n;
}

}  // namespace

Trajectory run_isi(const BackendConfig& review_backend, const BackendConfig& edit_backend,
                   const PromptRegistry& registry, const Submission& submission, IsiSetting setting,
                   const IsiOptions& options) {
  if (options.n_iterations < 1) throw UsageError("n_iterations must be >= 1");
  if (options.endpoint_runs < 1) throw UsageError("endpoint_runs must be >= 1");
  if (options.parse_retries < 0) throw UsageError("parse_retries must be >= 0");
  const auto& review_spec = registry.get_prompt(options.review_prompt);
  if (review_spec.kind != PromptKind::review) {
    throw UsageError(fmt::format("'{}' is not a review prompt", options.review_prompt));
  }
  const PromptSpec* edit_spec = nullptr;
  std::vector<EditType> allowed;
  if (setting != IsiSetting::baseline) {
    edit_spec = &registry.edit_prompt(setting);
    allowed = registry.taxonomy_for(setting);
  }

  const std::string key_root = fmt::format("isi/{}/{}", to_string(setting), submission.id);
  Trajectory t;
  t.paper_id = submission.id;
  t.split = submission.split;
  t.setting = setting;
  t.bodies.push_back(submission.body);

  std::optional<double> last_overall;
  ParsedReview last_review;
  std::vector<GeneratedReview> first_extra, last_extra;
  const int n = options.n_iterations;

  for (int i = 0; i <= n; ++i) {
    Submission current = submission;
    current.body = t.bodies.back();
    IterationRecord rec;
    rec.index = i;

    ReviewOptions ro;
    ro.parse_retries = options.parse_retries;
    ro.snap = options.snap;
    ro.trace_prefix = fmt::format("{}/iter{}/review", key_root, i);
    rec.review = generate_review(review_backend, registry, options.review_prompt, current, i, ro);

    if ((i == 0 || i == n) && options.endpoint_runs > 1) {
      auto& extra = i == 0 ? first_extra : last_extra;
      for (int k = 1; k < options.endpoint_runs; ++k) {
        ro.trace_prefix = fmt::format("{}/iter{}/review_run{}", key_root, i, k);
        extra.push_back(generate_review(review_backend, registry, options.review_prompt, current, i, ro));
      }
    }

    if (rec.review.scorable()) {
      rec.overall = rec.review.overall();
      last_overall = rec.overall;
      last_review = rec.review.parsed;
    } else if (i == 0) {
      t.aborted = true;
      t.abort_reason = rec.review.valid ? "initial review has no Overall score"
                                        : "initial review invalid: " + rec.review.failure_reason;
      t.iterations.push_back(std::move(rec));
      return t;
    } else {
      rec.review_carried = true;
      rec.overall = last_overall;
    }

    if (i == n) {
      t.iterations.push_back(std::move(rec));
      break;
    }
    if (setting == IsiSetting::baseline) {
      t.bodies.push_back(current.body);
      t.iterations.push_back(std::move(rec));
      continue;
    }

    const auto rendered =
        registry.render(*edit_spec, {{"review", format_review_for_prompt(last_review)}, {"paper", current.body}});
    std::optional<EditProposal> proposal;
    for (int attempt = 1; attempt <= options.parse_retries + 1; ++attempt) {
      CompletionRequest request;
      request.system_text = rendered.system_text;
      request.user_text = rendered.user_text;
      request.trace_key = fmt::format("{}/iter{}/edit/attempt{}", key_root, i, attempt);
      const auto result = complete(edit_backend, request);
      rec.edit_attempts = attempt;
      try {
        proposal = parse_edit(result.text, allowed, registry.taxonomy());
        break;
      } catch (const EditParseError& e) {
        rec.failure_reason = fmt::format("edit unparseable after {} attempt(s): {}", attempt, e.what());
      }
    }

    std::string next = current.body;
    if (proposal) {
      auto applied = apply_edit(current.body, *proposal);
      rec.edit = std::move(proposal);
      if (applied.ok) {
        rec.applied = true;
        rec.hunks = std::move(applied.hunks);
        rec.failure_reason.clear();
        next = std::move(applied.body);
      } else {
        rec.failure_reason = applied.failure_reason;
      }
    }
    t.bodies.push_back(std::move(next));
    t.iterations.push_back(std::move(rec));
  }

  t.initial_overall = endpoint_score(t.iterations.front(), first_extra);
  t.final_overall = endpoint_score(t.iterations.back(), last_extra);
  if (t.initial_overall && t.final_overall) t.outcome = outcome_of(*t.initial_overall, *t.final_overall);
  if (options.endpoint_runs > 1) {
    t.iterations.front().review.validation_log.push_back(
        fmt::format("endpoint mean over {} review(s)", first_extra.size() + 1));
    t.iterations.back().review.validation_log.push_back(
        fmt::format("endpoint mean over {} review(s)", last_extra.size() + 1));
  }
  return t;
}

// ---- persistence -------------------------------------------------------------

namespace {

json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_opt(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

EditFormat parse_format(const std::string& s) {
  for (auto f : {EditFormat::git_diff, EditFormat::arrow, EditFormat::exact_pair}) {
    if (to_string(f) == s) return f;
  }
  throw ParseError("unknown edit format '" + s + "'");
}

}  // namespace

json iteration_to_json(const IterationRecord& it) {
  json j = {{"index", it.index},
            {"review", review_to_json(it.review)},
            {"overall", opt_number(it.overall)},
            {"review_carried", it.review_carried},
            {"applied", it.applied},
            {"edit_attempts", it.edit_attempts}};
  if (it.edit) {
    json hunks = json::array();
    for (const auto& h : it.edit->hunks) hunks.push_back({{"original", h.original}, {"replacement", h.replacement}});
    j["edit"] = {{"selected_action", it.edit->selected_action},
                 {"format", to_string(it.edit->format)},
                 {"hunks", hunks},
                 {"raw", it.edit->raw}};
  }
  if (!it.hunks.empty()) {
    json spans = json::array();
    for (const auto& h : it.hunks) {
      spans.push_back({{"offset", h.offset},
                       {"old_length", h.old_length},
                       {"new_length", h.new_length},
                       {"normalized", h.normalized}});
    }
    j["applied_hunks"] = spans;
  }
  if (!it.failure_reason.empty()) j["failure_reason"] = it.failure_reason;
  return j;
}

IterationRecord iteration_from_json(const json& j) {
  IterationRecord it;
  it.index = j.at("index").get<int>();
  it.review = review_from_json(j.at("review"));
  it.overall = number_opt(j.at("overall"));
  it.review_carried = j.at("review_carried").get<bool>();
  it.applied = j.at("applied").get<bool>();
  it.edit_attempts = j.at("edit_attempts").get<int>();
  if (j.contains("edit")) {
    const auto& e = j["edit"];
    EditProposal p;
    p.selected_action = e.at("selected_action").get<std::string>();
    p.format = parse_format(e.at("format").get<std::string>());
    for (const auto& h : e.at("hunks")) {
      p.hunks.push_back({h.at("original").get<std::string>(), h.at("replacement").get<std::string>()});
    }
    p.raw = e.at("raw").get<std::string>();
    it.edit = std::move(p);
  }
  if (j.contains("applied_hunks")) {
    for (const auto& h : j["applied_hunks"]) {
      it.hunks.push_back({h.at("offset").get<std::size_t>(), h.at("old_length").get<std::size_t>(),
                          h.at("new_length").get<std::size_t>(), h.at("normalized").get<bool>()});
    }
  }
  it.failure_reason = j.value("failure_reason", "");
  return it;
}

json trajectory_summary_json(const Trajectory& t) {
  std::size_t applied = 0, failed = 0;
  for (const auto& it : t.iterations) {
    if (it.applied) ++applied;
    if (t.setting != IsiSetting::baseline && it.index + 1 < static_cast<int>(t.iterations.size()) && !it.applied) {
      ++failed;
    }
  }
  json j = {{"paper_id", t.paper_id},
            {"split", to_string(t.split)},
            {"setting", to_string(t.setting)},
            {"n_bodies", t.bodies.size()},
            {"n_records", t.iterations.size()},
            {"initial_overall", opt_number(t.initial_overall)},
            {"final_overall", opt_number(t.final_overall)},
            {"outcome", t.outcome ? json(std::string(to_string(*t.outcome))) : json(nullptr)},
            {"edits_applied", applied},
            {"edits_failed", failed},
            {"aborted", t.aborted}};
  if (t.aborted) j["abort_reason"] = t.abort_reason;
  return j;
}

void save_trajectory(const Trajectory& t, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < t.bodies.size(); ++i) {
    write_file_atomic(dir / fmt::format("s_{}.md", i), t.bodies[i]);
  }
  std::string lines;
  for (const auto& it : t.iterations) lines += dump(iteration_to_json(it)) + "\n";
  write_file_atomic(dir / "iterations.jsonl", lines);
  write_file_atomic(dir / "trajectory.json", dump(trajectory_summary_json(t), 2) + "\n");
}

bool trajectory_complete(const fs::path& dir) { return fs::exists(dir / "trajectory.json"); }

Trajectory load_trajectory(const fs::path& dir) {
  json summary;
  try {
    summary = json::parse(read_file(dir / "trajectory.json"));
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", (dir / "trajectory.json").string(), e.what()));
  }
  Trajectory t;
  try {
    t.paper_id = summary.at("paper_id").get<std::string>();
    const auto split = parse_split(summary.at("split").get<std::string>());
    const auto setting = parse_setting(summary.at("setting").get<std::string>());
    if (!split || !setting) throw ParseError("bad split or setting");
    t.split = *split;
    t.setting = *setting;
    t.initial_overall = number_opt(summary.at("initial_overall"));
    t.final_overall = number_opt(summary.at("final_overall"));
    if (const auto& o = summary.at("outcome"); !o.is_null()) {
      for (auto candidate : kOutcomes) {
        if (to_string(candidate) == o.get<std::string>()) t.outcome = candidate;
      }
    }
    t.aborted = summary.at("aborted").get<bool>();
    t.abort_reason = summary.value("abort_reason", "");
    for (const auto& line : split_lines(read_file(dir / "iterations.jsonl"))) {
      if (!trim(line).empty()) t.iterations.push_back(iteration_from_json(json::parse(line)));
    }
    const auto n_bodies = summary.at("n_bodies").get<std::size_t>();
    for (std::size_t i = 0; i < n_bodies; ++i) t.bodies.push_back(read_file(dir / fmt::format("s_{}.md", i)));
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", dir.string(), e.what()));
  }
  return t;
}

// ---- outcome classification ------------------------------------------------------

double OutcomeCounts::pct(Outcome o) const {
  if (n() == 0) return 0.0;
  const auto c = o == Outcome::Worse ? worse : o == Outcome::Equal ? equal : better;
  return 100.0 * static_cast<double>(c) / static_cast<double>(n());
}

namespace {

std::optional<PairedStats> paired_stats(const std::vector<double>& t0, const std::vector<double>& tN,
                                        stats::Sides sides) {
  if (t0.size() < 2) return std::nullopt;
  PairedStats out;
  try {
    out.result = stats::paired_t_test(t0, tN, sides);
  } catch (const UndefinedMetric&) {
    // Every difference equals the same non-zero shift.
    const double shift = tN.front() - t0.front();
    const double inf = std::numeric_limits<double>::infinity();
    out.degenerate = true;
    out.result.n = t0.size();
    out.result.df = static_cast<int>(t0.size()) - 1;
    out.result.t = out.result.d = std::copysign(inf, shift);
    out.result.p = sides == stats::Sides::two || shift > 0 ? 0.0 : 1.0;
  }
  return out;
}

}  // namespace

std::vector<SettingOutcomes> classify_outcomes(const std::vector<Trajectory>& trajectories, stats::Sides sides) {
  std::vector<SettingOutcomes> out;
  for (auto setting : kIsiSettings) {
    std::vector<const Trajectory*> mine;
    for (const auto& t : trajectories) {
      if (t.setting == setting) mine.push_back(&t);
    }
    if (mine.empty()) continue;
    std::sort(mine.begin(), mine.end(), [](const Trajectory* a, const Trajectory* b) { return a->paper_id < b->paper_id; });

    SettingOutcomes so;
    so.setting = setting;
    for (auto scope : kScopes) so.groups[scope];
    for (const auto* t : mine) {
      for (const auto& it : t->iterations) {
        if (it.applied) {
          ++so.n_applied;
          ++so.applied_edit_types[it.edit->selected_action];
        } else if (setting != IsiSetting::baseline && it.index + 1 < static_cast<int>(t->iterations.size())) {
          ++so.n_failed_edits;
        }
      }
      if (t->aborted || !t->outcome) {
        ++so.n_aborted;
        continue;
      }
      const Scope split_scope = t->split == Split::Accepted ? Scope::accepted : Scope::rejected;
      for (auto scope : {split_scope, Scope::combined}) {
        auto& g = so.groups[scope];
        switch (*t->outcome) {
          case Outcome::Worse: ++g.counts.worse; break;
          case Outcome::Equal: ++g.counts.equal; break;
          case Outcome::Better: ++g.counts.better; break;
        }
        g.paper_ids.push_back(t->paper_id);
        g.t0.push_back(*t->initial_overall);
        g.tN.push_back(*t->final_overall);
      }
    }
    for (auto& [scope, g] : so.groups) g.stats = paired_stats(g.t0, g.tN, sides);
    out.push_back(std::move(so));
  }
  return out;
}

}  // namespace review_arcade
