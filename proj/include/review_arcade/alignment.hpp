#pragma once

// Agreement between generated and human Overall scores: MAE against the
// human mean, best-match Pearson r, split macro-averaging, rerun
// consistency, and judge-based strengths/weaknesses recall.

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "review_arcade/corpus.hpp"
#include "review_arcade/model_gateway.hpp"
#include "review_arcade/prompt_registry.hpp"
#include "review_arcade/review_engine.hpp"

namespace review_arcade {

inline constexpr double kDefaultBaselineScore = 2.5;

// paper id -> Overall scores of its human reviews
using HumanOveralls = std::map<std::string, std::vector<double>>;
// paper id -> one generated Overall
using LlmOveralls = std::map<std::string, double>;

struct Exclusion {
  std::string paper_id;
  std::string reason;

  friend bool operator==(const Exclusion&, const Exclusion&) = default;
};

struct MaeResult {
  double mae = 0.0;
  std::size_t n_papers = 0;
  std::vector<Exclusion> excluded;
};

/// Mean over papers of |llm - mean(human Overalls)|. Papers lacking either
/// side are excluded and listed. Throws UndefinedMetric if none remain.
MaeResult mae_vs_human_mean(const LlmOveralls& llm, const HumanOveralls& humans);

struct MatchedPair {
  std::string paper_id;
  double llm = 0.0;
  double human = 0.0;

  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

/// Per paper, pairs the LLM score with the closest human score; ties go to
/// the lower human score. Exclusions as for mae_vs_human_mean.
std::vector<MatchedPair> best_match_pairs(const LlmOveralls& llm, const HumanOveralls& humans,
                                          std::vector<Exclusion>* excluded = nullptr);

// Pearson r over the pairs. Throws UsageError (< 2 pairs) or UndefinedMetric (constant side).
double best_match_pearson(const std::vector<MatchedPair>& pairs);

struct SplitMetric {
  double mae = 0.0;
  std::optional<double> r;  // absent when undefined on this split
  std::size_t n = 0;
};

struct CombinedMetric {
  double mae = 0.0;
  std::optional<double> r;
  bool r_clamped = false;  // an input |r| was pulled in from 1 before atanh
};

/// Unweighted split average: MAE arithmetically, r in Fisher-z space. The
/// combined r is absent unless both inputs are defined.
CombinedMetric macro_combine(const SplitMetric& accepted, const SplitMetric& rejected);

struct HumanHumanResult {
  double mae = 0.0;
  std::optional<double> r;
  std::size_t n_papers = 0;
  std::size_t n_reviews = 0;
};

/// Each review of a multi-review paper is scored against the mean of that
/// paper's other reviews (MAE) and against its closest other review
/// (best-match r). Throws UndefinedMetric without multi-review papers.
HumanHumanResult human_human_alignment(const HumanOveralls& humans);

struct ConsistencyReport {
  double pct_inconsistent = 0.0;
  double pct_delta_gt_half = 0.0;
  std::size_t n_papers = 0;
  std::vector<Exclusion> excluded;
};

/// Share of papers whose repeated-run Overalls are not all equal, and share
/// whose spread (max - min) strictly exceeds 0.5. Papers with fewer than two
/// runs are excluded. Throws UndefinedMetric if none remain.
ConsistencyReport consistency(const std::map<std::string, std::vector<double>>& runs);

struct JudgeVerdict {
  int human_strength_points = 0;
  int human_weakness_points = 0;
  int captured_strengths = 0;
  int captured_weaknesses = 0;
  bool valid = false;
  std::string failure_reason;
  std::string raw_text;
  int attempts = 0;

  std::optional<double> s_recall() const;
  std::optional<double> w_recall() const;
};

/// Reads {"Strengths": {"human_points", "captured"}, "Weaknesses": {...}}
/// from judge output. Throws ParseError when absent, negative, or when
/// captured exceeds points.
JudgeVerdict parse_judge_text(const std::string& text);

// Markdown rendering used as `${human_review}` in the judge prompt.
std::string format_human_review(const HumanReview& review);

struct JudgeOptions {
  int parse_retries = kDefaultParseRetries;
  std::string trace_prefix = "judge";
};

/// Asks the judge backend how many human-stated points the LLM review
/// captured. Throws UsageError if the human review lists no strengths or
/// weaknesses. Unparseable output after the budget gives valid == false.
JudgeVerdict judge_recall(const BackendConfig& backend, const PromptRegistry& registry,
                          const HumanReview& human, const ParsedReview& llm_review,
                          const JudgeOptions& options = {});

struct RecallSummary {
  std::optional<double> s_recall;  // mean over verdicts where defined
  std::optional<double> w_recall;
  std::size_t n_strength = 0;
  std::size_t n_weakness = 0;
  std::size_t n_invalid = 0;
};

RecallSummary summarize_recall(const std::vector<JudgeVerdict>& verdicts);

// ---- run-level aggregation -------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population std over the aggregated values
  std::size_t n = 0;  // values aggregated; 0 means undefined

  bool defined() const { return n > 0; }
};

MeanStd mean_std(const std::vector<double>& values);

enum class Scope { accepted, rejected, combined };
std::string_view to_string(Scope s);
inline constexpr std::array<Scope, 3> kScopes{Scope::accepted, Scope::rejected, Scope::combined};

struct AlignmentCell {
  MeanStd mae;
  MeanStd r;
  std::size_t n_papers = 0;    // distinct papers scored in any run
  std::size_t n_excluded = 0;  // exclusions summed over runs
  bool r_clamped = false;
};

struct PromptAlignment {
  std::string model;
  std::string prompt;
  std::map<Scope, AlignmentCell> cells;
};

/// Scores one model x prompt: metrics per run and split, the combined
/// split per run, then mean/std over runs. Reviews that are not scorable,
/// and papers without human reviews, count as exclusions.
PromptAlignment align_prompt(const std::string& model, const std::string& prompt,
                             const std::vector<GeneratedReview>& reviews, const Corpus& corpus);

// Human Overalls of a corpus, restricted to one split.
HumanOveralls human_overalls(const Corpus& corpus, Split split);

/// Mean and population std across the given prompts' mean values.
PromptAlignment aggregate_all(const std::string& model, const std::vector<PromptAlignment>& prompts);

/// Prompt with the highest combined mean r (first wins ties; prompts
/// without a defined combined r are skipped). nullopt if none qualifies.
std::optional<std::size_t> best_prompt(const std::vector<PromptAlignment>& prompts);

PromptAlignment constant_baseline(const Corpus& corpus, double constant);
PromptAlignment human_baseline(const Corpus& corpus);

}  // namespace review_arcade
