#pragma once

// Iterative submission improvement: review the body, ask an editor model for
// one edit drawn from the setting's taxonomy, apply it, repeat.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "review_arcade/alignment.hpp"
#include "review_arcade/corpus.hpp"
#include "review_arcade/edit.hpp"
#include "review_arcade/model_gateway.hpp"
#include "review_arcade/prompt_registry.hpp"
#include "review_arcade/review_engine.hpp"
#include "review_arcade/stats.hpp"

namespace review_arcade {

enum class Outcome { Worse, Equal, Better };
std::string_view to_string(Outcome o);
inline constexpr std::array<Outcome, 3> kOutcomes{Outcome::Worse, Outcome::Equal, Outcome::Better};

/// One step of the loop. Index N (the last record) holds only the review of
/// the final body. `review_carried` marks a review that stayed invalid after
/// its retry budget; the previous score stands in for it.
struct IterationRecord {
  int index = 0;
  GeneratedReview review;
  std::optional<EditProposal> edit;
  bool applied = false;
  std::vector<AppliedHunk> hunks;
  std::string failure_reason;
  int edit_attempts = 0;
  bool review_carried = false;
  std::optional<double> overall;  // score in effect after this review
};

struct Trajectory {
  std::string paper_id;
  Split split = Split::Accepted;
  IsiSetting setting = IsiSetting::baseline;
  std::vector<IterationRecord> iterations;
  std::vector<std::string> bodies;  // s_0 .. s_N
  std::optional<double> initial_overall;
  std::optional<double> final_overall;
  std::optional<Outcome> outcome;
  bool aborted = false;
  std::string abort_reason;
};

struct IsiOptions {
  int n_iterations = 10;
  std::string review_prompt = "default";
  int parse_retries = kDefaultParseRetries;
  bool snap = false;
  // Reviews averaged at s_0 and s_N for the endpoint scores. 1 compares the
  // single loop reviews.
  int endpoint_runs = 1;
};

Outcome outcome_of(double initial, double final_score);

/// Runs the loop on one submission. Transport failures propagate.
/// Throws UsageError when n_iterations < 1 or the prompts do not resolve.
Trajectory run_isi(const BackendConfig& review_backend, const BackendConfig& edit_backend,
                   const PromptRegistry& registry, const Submission& submission, IsiSetting setting,
                   const IsiOptions& options = {});

nlohmann::json iteration_to_json(const IterationRecord& it);
IterationRecord iteration_from_json(const nlohmann::json& j);
nlohmann::json trajectory_summary_json(const Trajectory& t);

/// Writes s_0.md .. s_N.md, iterations.jsonl and trajectory.json (last, so
/// its presence marks a complete trajectory) under `dir`.
void save_trajectory(const Trajectory& t, const std::filesystem::path& dir);
Trajectory load_trajectory(const std::filesystem::path& dir);
bool trajectory_complete(const std::filesystem::path& dir);

struct OutcomeCounts {
  std::size_t worse = 0;
  std::size_t equal = 0;
  std::size_t better = 0;
  std::size_t n() const { return worse + equal + better; }
  double pct(Outcome o) const;
};

/// Paired t / Cohen's d over (t0, tN). When every difference is the same
/// non-zero value the kernel's result is undefined; the limit is reported
/// instead (p = 0, t and d infinite with the sign of the shift) and
/// `degenerate` is set.
struct PairedStats {
  stats::StatResult result;
  bool degenerate = false;
};

struct OutcomeGroup {
  OutcomeCounts counts;
  std::vector<std::string> paper_ids;  // sorted; t0/tN follow this order
  std::vector<double> t0;
  std::vector<double> tN;
  std::optional<PairedStats> stats;  // absent when fewer than 2 papers
};

struct SettingOutcomes {
  IsiSetting setting = IsiSetting::baseline;
  std::map<Scope, OutcomeGroup> groups;
  std::size_t n_aborted = 0;
  std::map<std::string, std::size_t> applied_edit_types;
  std::size_t n_applied = 0;
  std::size_t n_failed_edits = 0;
};

/// Groups completed trajectories by setting and split. Aborted ones are
/// only counted.
std::vector<SettingOutcomes> classify_outcomes(const std::vector<Trajectory>& trajectories,
                                               stats::Sides sides = stats::Sides::two);

}  // namespace review_arcade
