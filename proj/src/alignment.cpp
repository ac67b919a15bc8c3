#include "review_arcade/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "review_arcade/error.hpp"
#include "review_arcade/json_scan.hpp"
#include "review_arcade/stats.hpp"
#include "review_arcade/util.hpp"

namespace review_arcade {

using nlohmann::json;

namespace {

// Papers present on both sides, with exclusions for the rest.
std::vector<std::string> joined_papers(const LlmOveralls& llm, const HumanOveralls& humans,
                                       std::vector<Exclusion>* excluded) {
  std::vector<std::string> ids;
  for (const auto& [id, score] : llm) {
    auto it = humans.find(id);
    if (it == humans.end() || it->second.empty()) {
      if (excluded) excluded->push_back({id, "no human Overall"});
    } else {
      ids.push_back(id);
    }
  }
  for (const auto& [id, scores] : humans) {
    if (!scores.empty() && !llm.count(id) && excluded) excluded->push_back({id, "no generated Overall"});
  }
  return ids;
}

double closest(double target, const std::vector<double>& candidates) {
  double best = candidates.front();
  for (double c : candidates) {
    const double d = std::abs(c - target), bd = std::abs(best - target);
    if (d < bd || (d == bd && c < best)) best = c;
  }
  return best;
}

std::optional<double> try_pearson(const std::vector<MatchedPair>& pairs) {
  try {
    return best_match_pearson(pairs);
  } catch (const UsageError&) {
    return std::nullopt;
  } catch (const UndefinedMetric&) {
    return std::nullopt;
  }
}

int count_field(const json& section, std::string_view key, std::string_view where) {
  const json* v = find_key_folded(section, key);
  const auto num = v ? as_number(*v) : std::nullopt;
  if (!num) throw ParseError(fmt::format("judge output: {}.{} missing or not numeric", where, key));
  if (*num < 0 || *num != std::floor(*num)) {
    throw ParseError(fmt::format("judge output: {}.{} must be a non-negative integer", where, key));
  }
  return static_cast<int>(*num);
}

bool has_section(const json& j, std::string_view key) {
  const json* s = find_key_folded(j, key);
  return s && s->is_object();
}

AlignmentCell single_run_cell(const std::optional<double>& mae, const std::optional<double>& r,
                              std::size_t n_papers, bool clamped = false) {
  AlignmentCell cell;
  if (mae) cell.mae = mean_std({*mae});
  if (r) cell.r = mean_std({*r});
  cell.n_papers = n_papers;
  cell.r_clamped = clamped;
  return cell;
}

}  // namespace

MaeResult mae_vs_human_mean(const LlmOveralls& llm, const HumanOveralls& humans) {
  MaeResult out;
  const auto ids = joined_papers(llm, humans, &out.excluded);
  if (ids.empty()) throw UndefinedMetric("MAE: no paper has both a generated and a human Overall");
  double total = 0.0;
  for (const auto& id : ids) total += std::abs(llm.at(id) - stats::mean(humans.at(id)));
  out.mae = total / static_cast<double>(ids.size());
  out.n_papers = ids.size();
  return out;
}

std::vector<MatchedPair> best_match_pairs(const LlmOveralls& llm, const HumanOveralls& humans,
                                          std::vector<Exclusion>* excluded) {
  std::vector<MatchedPair> pairs;
  for (const auto& id : joined_papers(llm, humans, excluded)) {
    const double score = llm.at(id);
    pairs.push_back({id, score, closest(score, humans.at(id))});
  }
  return pairs;
}

double best_match_pearson(const std::vector<MatchedPair>& pairs) {
  std::vector<double> x, y;
  for (const auto& p : pairs) {
    x.push_back(p.llm);
    y.push_back(p.human);
  }
  return stats::pearson(x, y);
}

CombinedMetric macro_combine(const SplitMetric& accepted, const SplitMetric& rejected) {
  CombinedMetric out;
  out.mae = (accepted.mae + rejected.mae) / 2.0;
  if (accepted.r && rejected.r) {
    const auto a = stats::clamp_correlation(*accepted.r);
    const auto b = stats::clamp_correlation(*rejected.r);
    out.r_clamped = a.clamped || b.clamped;
    out.r = stats::inverse_fisher_z((stats::fisher_z(a.r) + stats::fisher_z(b.r)) / 2.0);
  }
  return out;
}

HumanHumanResult human_human_alignment(const HumanOveralls& humans) {
  HumanHumanResult out;
  double total = 0.0;
  std::vector<MatchedPair> pairs;
  for (const auto& [id, scores] : humans) {
    if (scores.size() < 2) continue;
    ++out.n_papers;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      std::vector<double> others;
      for (std::size_t j = 0; j < scores.size(); ++j) {
        if (j != i) others.push_back(scores[j]);
      }
      total += std::abs(scores[i] - stats::mean(others));
      pairs.push_back({id, scores[i], closest(scores[i], others)});
    }
  }
  if (out.n_papers == 0) throw UndefinedMetric("human-human alignment needs papers with >= 2 reviews");
  out.n_reviews = pairs.size();
  out.mae = total / static_cast<double>(out.n_reviews);
  out.r = try_pearson(pairs);
  return out;
}

ConsistencyReport consistency(const std::map<std::string, std::vector<double>>& runs) {
  ConsistencyReport out;
  std::size_t inconsistent = 0, wide = 0;
  for (const auto& [id, scores] : runs) {
    if (scores.size() < 2) {
      out.excluded.push_back({id, fmt::format("{} run(s); need >= 2", scores.size())});
      continue;
    }
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    ++out.n_papers;
    if (*hi != *lo) ++inconsistent;
    if (*hi - *lo > 0.5) ++wide;
  }
  if (out.n_papers == 0) throw UndefinedMetric("consistency: no paper has >= 2 runs");
  const double n = static_cast<double>(out.n_papers);
  out.pct_inconsistent = 100.0 * static_cast<double>(inconsistent) / n;
  out.pct_delta_gt_half = 100.0 * static_cast<double>(wide) / n;
  return out;
}

std::optional<double> JudgeVerdict::s_recall() const {
  if (!valid || human_strength_points == 0) return std::nullopt;
  return static_cast<double>(captured_strengths) / human_strength_points;
}

std::optional<double> JudgeVerdict::w_recall() const {
  if (!valid || human_weakness_points == 0) return std::nullopt;
  return static_cast<double>(captured_weaknesses) / human_weakness_points;
}

JudgeVerdict parse_judge_text(const std::string& text) {
  auto doc = find_json_object(
      text, [](const json& j) { return has_section(j, "Strengths") && has_section(j, "Weaknesses"); });
  if (!doc) throw ParseError("judge output has no Strengths/Weaknesses object");
  const json& s = *find_key_folded(*doc, "Strengths");
  const json& w = *find_key_folded(*doc, "Weaknesses");
  JudgeVerdict v;
  v.human_strength_points = count_field(s, "human_points", "Strengths");
  v.captured_strengths = count_field(s, "captured", "Strengths");
  v.human_weakness_points = count_field(w, "human_points", "Weaknesses");
  v.captured_weaknesses = count_field(w, "captured", "Weaknesses");
  if (v.captured_strengths > v.human_strength_points || v.captured_weaknesses > v.human_weakness_points) {
    throw ParseError("judge output is inconsistent: captured exceeds human points");
  }
  v.valid = true;
  v.raw_text = text;
  return v;
}

std::string format_human_review(const HumanReview& review) {
  std::string out = "## Scores\n";
  for (const auto& [k, v] : review.scores) out += fmt::format("- {}: {}\n", k, v);
  out += "\n## Summary of Strengths\n";
  for (const auto& s : review.strengths) out += "- " + s + "\n";
  out += "\n## Summary of Weaknesses\n";
  for (const auto& w : review.weaknesses) out += "- " + w + "\n";
  return out;
}

JudgeVerdict judge_recall(const BackendConfig& backend, const PromptRegistry& registry, const HumanReview& human,
                          const ParsedReview& llm_review, const JudgeOptions& options) {
  if (human.strengths.empty() && human.weaknesses.empty()) {
    throw UsageError(fmt::format("paper {}: human review lists no strengths or weaknesses", human.paper_id));
  }
  const auto rendered = registry.render(
      registry.judge_prompt(),
      {{"human_review", format_human_review(human)}, {"review", format_review_for_prompt(llm_review)}});
  JudgeVerdict out;
  for (int attempt = 1; attempt <= options.parse_retries + 1; ++attempt) {
    CompletionRequest request;
    request.system_text = rendered.system_text;
    request.user_text = rendered.user_text;
    request.trace_key = fmt::format("{}/attempt{}", options.trace_prefix, attempt);
    const auto result = complete(backend, request);
    try {
      out = parse_judge_text(result.text);
      out.attempts = attempt;
      return out;
    } catch (const ParseError& e) {
      out.raw_text = result.text;
      out.attempts = attempt;
      out.failure_reason = e.what();
    }
  }
  return out;
}

RecallSummary summarize_recall(const std::vector<JudgeVerdict>& verdicts) {
  RecallSummary out;
  double s_total = 0.0, w_total = 0.0;
  for (const auto& v : verdicts) {
    if (!v.valid) {
      ++out.n_invalid;
      continue;
    }
    if (auto s = v.s_recall()) {
      s_total += *s;
      ++out.n_strength;
    }
    if (auto w = v.w_recall()) {
      w_total += *w;
      ++out.n_weakness;
    }
  }
  if (out.n_strength) out.s_recall = s_total / static_cast<double>(out.n_strength);
  if (out.n_weakness) out.w_recall = w_total / static_cast<double>(out.n_weakness);
  return out;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  out.n = values.size();
  if (values.empty()) return out;
  out.mean = stats::mean(values);
  out.std = stats::population_sd(values);
  return out;
}

std::string_view to_string(Scope s) {
  switch (s) {
    case Scope::accepted: return "accepted";
    case Scope::rejected: return "rejected";
    case Scope::combined: return "combined";
  }
  return "unknown";
}

HumanOveralls human_overalls(const Corpus& corpus, Split split) {
  HumanOveralls out;
  for (const auto& sub : corpus.submissions) {
    if (sub.split != split) continue;
    for (const auto& r : corpus.reviews_for(sub.id)) out[sub.id].push_back(r.overall());
  }
  return out;
}

PromptAlignment align_prompt(const std::string& model, const std::string& prompt,
                             const std::vector<GeneratedReview>& reviews, const Corpus& corpus) {
  std::set<int> runs;
  for (const auto& r : reviews) runs.insert(r.run_index);

  std::map<Scope, std::vector<double>> maes, rs;
  std::map<Scope, std::set<std::string>> papers;
  std::map<Scope, std::size_t> excluded;
  bool clamped = false;
  const HumanOveralls humans[2] = {human_overalls(corpus, Split::Accepted),
                                   human_overalls(corpus, Split::Rejected)};

  for (int run : runs) {
    std::optional<SplitMetric> split_metric[2];
    for (Split split : kSplits) {
      const auto idx = static_cast<std::size_t>(split);
      const auto scope = split == Split::Accepted ? Scope::accepted : Scope::rejected;
      LlmOveralls llm;
      for (const auto& r : reviews) {
        if (r.run_index != run) continue;
        const auto* sub = corpus.find(r.paper_id);
        if (!sub || sub->split != split) continue;
        if (auto o = r.overall()) llm[r.paper_id] = *o;
      }
      MaeResult mae;
      try {
        mae = mae_vs_human_mean(llm, humans[idx]);
      } catch (const UndefinedMetric&) {
        excluded[scope] += humans[idx].size();
        continue;
      }
      excluded[scope] += mae.excluded.size();
      SplitMetric m;
      m.mae = mae.mae;
      m.n = mae.n_papers;
      m.r = try_pearson(best_match_pairs(llm, humans[idx]));
      for (const auto& [id, score] : llm) {
        if (humans[idx].count(id)) papers[scope].insert(id);
      }
      maes[scope].push_back(m.mae);
      if (m.r) rs[scope].push_back(*m.r);
      split_metric[idx] = m;
    }
    if (split_metric[0] && split_metric[1]) {
      const auto c = macro_combine(*split_metric[0], *split_metric[1]);
      maes[Scope::combined].push_back(c.mae);
      if (c.r) rs[Scope::combined].push_back(*c.r);
      clamped = clamped || c.r_clamped;
    }
  }

  PromptAlignment out{model, prompt, {}};
  for (Scope scope : kScopes) {
    AlignmentCell cell;
    cell.mae = mean_std(maes[scope]);
    cell.r = mean_std(rs[scope]);
    if (scope == Scope::combined) {
      cell.n_papers = papers[Scope::accepted].size() + papers[Scope::rejected].size();
      cell.n_excluded = excluded[Scope::accepted] + excluded[Scope::rejected];
      cell.r_clamped = clamped;
    } else {
      cell.n_papers = papers[scope].size();
      cell.n_excluded = excluded[scope];
    }
    out.cells[scope] = cell;
  }
  return out;
}

PromptAlignment aggregate_all(const std::string& model, const std::vector<PromptAlignment>& prompts) {
  PromptAlignment out{model, "All", {}};
  for (Scope scope : kScopes) {
    std::vector<double> maes, rs;
    AlignmentCell cell;
    for (const auto& p : prompts) {
      const auto& c = p.cells.at(scope);
      if (c.mae.defined()) maes.push_back(c.mae.mean);
      if (c.r.defined()) rs.push_back(c.r.mean);
      cell.n_papers = std::max(cell.n_papers, c.n_papers);
      cell.n_excluded += c.n_excluded;
      cell.r_clamped = cell.r_clamped || c.r_clamped;
    }
    cell.mae = mean_std(maes);
    cell.r = mean_std(rs);
    out.cells[scope] = cell;
  }
  return out;
}

std::optional<std::size_t> best_prompt(const std::vector<PromptAlignment>& prompts) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& r = prompts[i].cells.at(Scope::combined).r;
    if (!r.defined()) continue;
    if (!best || r.mean > prompts[*best].cells.at(Scope::combined).r.mean) best = i;
  }
  return best;
}

PromptAlignment constant_baseline(const Corpus& corpus, double constant) {
  PromptAlignment out{"baseline", fmt::format("constant {}", constant), {}};
  std::optional<SplitMetric> split_metric[2];
  std::size_t total_papers = 0;
  for (Split split : kSplits) {
    const auto idx = static_cast<std::size_t>(split);
    const auto humans = human_overalls(corpus, split);
    LlmOveralls llm;
    for (const auto& [id, scores] : humans) llm[id] = constant;
    std::optional<double> mae;
    if (!llm.empty()) {
      mae = mae_vs_human_mean(llm, humans).mae;
      split_metric[idx] = SplitMetric{*mae, try_pearson(best_match_pairs(llm, humans)), llm.size()};
    }
    total_papers += llm.size();
    out.cells[split == Split::Accepted ? Scope::accepted : Scope::rejected] =
        single_run_cell(mae, split_metric[idx] ? split_metric[idx]->r : std::nullopt, llm.size());
  }
  std::optional<double> mae, r;
  bool clamped = false;
  if (split_metric[0] && split_metric[1]) {
    const auto c = macro_combine(*split_metric[0], *split_metric[1]);
    mae = c.mae;
    r = c.r;
    clamped = c.r_clamped;
  }
  out.cells[Scope::combined] = single_run_cell(mae, r, total_papers, clamped);
  return out;
}

PromptAlignment human_baseline(const Corpus& corpus) {
  PromptAlignment out{"human", "human", {}};
  std::optional<SplitMetric> split_metric[2];
  std::size_t total_papers = 0;
  for (Split split : kSplits) {
    const auto idx = static_cast<std::size_t>(split);
    const auto scope = split == Split::Accepted ? Scope::accepted : Scope::rejected;
    try {
      const auto hh = human_human_alignment(human_overalls(corpus, split));
      split_metric[idx] = SplitMetric{hh.mae, hh.r, hh.n_papers};
      out.cells[scope] = single_run_cell(hh.mae, hh.r, hh.n_papers);
      total_papers += hh.n_papers;
    } catch (const UndefinedMetric&) {
      out.cells[scope] = AlignmentCell{};
    }
  }
  std::optional<double> mae, r;
  bool clamped = false;
  if (split_metric[0] && split_metric[1]) {
    const auto c = macro_combine(*split_metric[0], *split_metric[1]);
    mae = c.mae;
    r = c.r;
    clamped = c.r_clamped;
  }
  out.cells[Scope::combined] = single_run_cell(mae, r, total_papers, clamped);
  return out;
}

}  // namespace review_arcade
