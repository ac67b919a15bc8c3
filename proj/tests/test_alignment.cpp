#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "review_arcade/alignment.hpp"
#include "review_arcade/error.hpp"

namespace ra = review_arcade;

namespace {

ra::Corpus make_corpus(const std::vector<std::tuple<std::string, ra::Split, std::vector<double>>>& papers) {
  ra::Corpus c;
  for (const auto& [id, split, overalls] : papers) {
    ra::Submission s;
    s.id = id;
    s.split = split;
    s.body = "body of " + id;
    s.token_count = 3;
    c.submissions.push_back(s);
    for (double o : overalls) {
      ra::HumanReview h;
      h.paper_id = id;
      h.scores["Overall"] = o;
      h.strengths = {"s"};
      c.reviews[id].push_back(h);
    }
  }
  return c;
}

ra::GeneratedReview generated(std::string paper, int run, std::optional<double> overall) {
  ra::GeneratedReview r;
  r.paper_id = std::move(paper);
  r.run_index = run;
  r.valid = true;
  if (overall) r.parsed.scores["Overall"] = *overall;
  return r;
}

}  // namespace

TEST(Mae, Examples) {
  EXPECT_EQ(ra::mae_vs_human_mean({{"a", 3.0}}, {{"a", {2.0, 4.0}}}).mae, 0.0);
  EXPECT_EQ(ra::mae_vs_human_mean({{"a", 4.5}}, {{"a", {3.0}}}).mae, 1.5);
  const auto r = ra::mae_vs_human_mean({{"a", 3.0}, {"b", 1.0}}, {{"a", {2.0}}, {"c", {4.0}}});
  EXPECT_EQ(r.mae, 1.0);
  EXPECT_EQ(r.n_papers, 1u);
  EXPECT_EQ(r.excluded, (std::vector<ra::Exclusion>{{"b", "no human Overall"}, {"c", "no generated Overall"}}));
  EXPECT_THROW(ra::mae_vs_human_mean({{"b", 1.0}}, {{"c", {4.0}}}), ra::UndefinedMetric);
}

TEST(Mae, ShiftWithFixedResidualSignsMovesByDelta) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.1, 1.0), h(1.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    ra::LlmOveralls llm;
    ra::HumanOveralls humans;
    for (int i = 0; i < 20; ++i) {
      const auto id = std::to_string(i);
      humans[id] = {h(rng), h(rng)};
      llm[id] = (humans[id][0] + humans[id][1]) / 2 + u(rng);  // residuals all positive
    }
    const double delta = u(rng);
    auto shifted = llm;
    for (auto& [id, v] : shifted) v += delta;
    EXPECT_NEAR(ra::mae_vs_human_mean(shifted, humans).mae - ra::mae_vs_human_mean(llm, humans).mae, delta,
                1e-12);
  }
}

TEST(BestMatch, PairsAndTieBreak) {
  auto match = [](double llm, std::vector<double> humans) {
    return ra::best_match_pairs({{"p", llm}}, {{"p", humans}}).at(0).human;
  };
  EXPECT_EQ(match(3.5, {2.0, 4.0}), 4.0);
  EXPECT_EQ(match(3.0, {2.5, 3.5}), 2.5);
  EXPECT_EQ(match(3.0, {3.5, 2.5}), 2.5);
  EXPECT_EQ(match(2.0, {2.0}), 2.0);
}

TEST(BestMatch, Pearson) {
  auto pairs = [](std::vector<double> x, std::vector<double> y) {
    std::vector<ra::MatchedPair> out;
    for (std::size_t i = 0; i < x.size(); ++i) out.push_back({std::to_string(i), x[i], y[i]});
    return out;
  };
  EXPECT_DOUBLE_EQ(ra::best_match_pearson(pairs({1, 2, 3}, {1, 2, 3})), 1.0);
  EXPECT_NEAR(ra::best_match_pearson(pairs({1, 2, 3, 4}, {1, 3, 2, 4})), 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(ra::best_match_pearson(pairs({1, 2, 3}, {3, 2, 1})), -1.0);
  EXPECT_THROW(ra::best_match_pearson(pairs({2, 2, 2}, {1, 2, 3})), ra::UndefinedMetric);
  EXPECT_THROW(ra::best_match_pearson(pairs({1}, {1})), ra::UsageError);
}

TEST(BestMatch, PearsonAgreesWithOracleAndIsAffineInvariant) {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> len(2, 1000);
  std::normal_distribution<double> g(3.0, 1.0);
  std::uniform_real_distribution<double> scale(0.1, 10.0), shift(-5.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ra::MatchedPair> pairs;
    std::vector<double> x, y;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      pairs.push_back({std::to_string(i), g(rng), g(rng)});
      x.push_back(pairs.back().llm);
      y.push_back(pairs.back().human);
    }
    const double r = ra::best_match_pearson(pairs);
    EXPECT_NEAR(r, oracle::pearson_two_pass(x, y), 1e-12);
    const double a = scale(rng), b = shift(rng);
    auto transformed = pairs;
    for (auto& p : transformed) p.llm = a * p.llm + b;
    EXPECT_NEAR(ra::best_match_pearson(transformed), r, 1e-12);
  }
}

TEST(MacroCombine, TableFixtureAndIdentities) {
  const auto c = ra::macro_combine({0.75, std::nullopt, 10}, {0.53, std::nullopt, 10});
  EXPECT_NEAR(c.mae, 0.64, 1e-12);
  EXPECT_FALSE(c.r.has_value());
  EXPECT_EQ(*ra::macro_combine({0, 0.0, 2}, {0, 0.0, 2}).r, 0.0);
  EXPECT_NEAR(*ra::macro_combine({0, 0.5, 2}, {0, 0.5, 2}).r, 0.5, 1e-12);
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> ur(-0.99, 0.99), um(0.0, 4.0);
  for (int i = 0; i < 1000; ++i) {
    const ra::SplitMetric x{um(rng), ur(rng), 5};
    const auto self = ra::macro_combine(x, x);
    EXPECT_NEAR(self.mae, x.mae, 1e-12);
    EXPECT_NEAR(*self.r, *x.r, 1e-12);
  }
  const auto bounded = ra::macro_combine({0, 1.0, 2}, {0, 0.5, 2});
  EXPECT_TRUE(bounded.r_clamped);
  EXPECT_LT(*bounded.r, 1.0);
}

TEST(HumanHuman, Examples) {
  const auto agree = ra::human_human_alignment({{"a", {3, 3}}});
  EXPECT_EQ(agree.mae, 0.0);
  EXPECT_EQ(agree.n_reviews, 2u);
  EXPECT_EQ(ra::human_human_alignment({{"a", {2, 4}}}).mae, 2.0);
  // leave-one-out: 3 vs mean(4,5)=4.5, 4 vs 4, 5 vs 3.5 -> (1.5 + 0 + 1.5) / 3
  EXPECT_DOUBLE_EQ(ra::human_human_alignment({{"a", {3, 4, 5}}, {"b", {2}}}).mae, 1.0);
  EXPECT_THROW(ra::human_human_alignment({{"a", {3}}, {"b", {4}}}), ra::UndefinedMetric);
}

TEST(Consistency, HandFixtures) {
  auto one = [](std::vector<double> runs) { return ra::consistency({{"p", runs}}); };
  EXPECT_EQ(one({3, 3, 3}).pct_inconsistent, 0.0);
  EXPECT_EQ(one({3, 3, 3.5}).pct_inconsistent, 100.0);
  EXPECT_EQ(one({3, 3, 3.5}).pct_delta_gt_half, 0.0);
  EXPECT_EQ(one({2.5, 3.5, 3.5}).pct_inconsistent, 100.0);
  EXPECT_EQ(one({2.5, 3.5, 3.5}).pct_delta_gt_half, 100.0);
  const auto mixed = ra::consistency({{"a", {3, 3, 3}}, {"b", {3, 3, 3.5}}, {"c", {2.5, 3.5, 3.5}}, {"d", {4}}});
  EXPECT_EQ(mixed.n_papers, 3u);
  EXPECT_NEAR(mixed.pct_inconsistent, 200.0 / 3, 1e-12);
  EXPECT_NEAR(mixed.pct_delta_gt_half, 100.0 / 3, 1e-12);
  EXPECT_EQ(mixed.excluded.size(), 1u);
  EXPECT_THROW(ra::consistency({{"d", {4}}}), ra::UndefinedMetric);
}

TEST(Consistency, OrderingInvariantOnFuzzedRuns) {
  std::mt19937 rng(13);
  std::uniform_int_distribution<int> half(2, 10), runs(2, 5), papers(1, 40);
  for (int trial = 0; trial < 500; ++trial) {
    std::map<std::string, std::vector<double>> data;
    const int n = papers(rng);
    for (int p = 0; p < n; ++p) {
      auto& v = data[std::to_string(p)];
      const int k = runs(rng);
      const int base = half(rng);
      for (int i = 0; i < k; ++i) v.push_back(std::clamp(base + (half(rng) % 3) - 1, 2, 10) / 2.0);
    }
    const auto rep = ra::consistency(data);
    EXPECT_LE(rep.pct_delta_gt_half, rep.pct_inconsistent);
    EXPECT_GE(rep.pct_delta_gt_half, 0.0);
    EXPECT_LE(rep.pct_inconsistent, 100.0);
  }
}

TEST(Judge, ParseVerdicts) {
  const auto v = ra::parse_judge_text(
      R"(Counts: {"Strengths": {"human_points": 0, "captured": 0}, "Weaknesses": {"human_points": 4, "captured": "2"}})");
  EXPECT_EQ(v.w_recall(), 0.5);
  EXPECT_FALSE(v.s_recall().has_value());
  EXPECT_THROW(ra::parse_judge_text(
                   R"({"Strengths": {"human_points": 1, "captured": 2}, "Weaknesses": {"human_points": 1, "captured": 0}})"),
               ra::ParseError);
  EXPECT_THROW(ra::parse_judge_text(R"({"Strengths": {"human_points": 1}, "Weaknesses": {}})"), ra::ParseError);
  EXPECT_THROW(ra::parse_judge_text("no json"), ra::ParseError);
  EXPECT_THROW(ra::parse_judge_text(
                   R"({"Strengths": {"human_points": 1.5, "captured": 0}, "Weaknesses": {"human_points": 1, "captured": 0}})"),
               ra::ParseError);
}

TEST(Judge, RecallSummaryExcludesUndefined) {
  ra::JudgeVerdict a, b, bad;
  a.valid = b.valid = true;
  a.human_strength_points = 2;
  a.captured_strengths = 1;
  a.human_weakness_points = 4;
  a.captured_weaknesses = 4;
  b.human_weakness_points = 2;
  const auto s = ra::summarize_recall({a, b, bad});
  EXPECT_EQ(s.s_recall, 0.5);
  EXPECT_EQ(s.n_strength, 1u);
  EXPECT_EQ(s.w_recall, 0.5);
  EXPECT_EQ(s.n_weakness, 2u);
  EXPECT_EQ(s.n_invalid, 1u);
}

TEST(Judge, ThroughMockBackend) {
  const auto reg = ra::PromptRegistry::load_bundled();
  ra::MockScript script;
  script.rules.push_back({{"# HUMAN REVIEW", "tiny eval set"},
                          "",
                          {ra::MockReply::ok("nope"),
                           ra::MockReply::ok(R"({"Strengths": {"human_points": 1, "captured": 1},
                                                 "Weaknesses": {"human_points": 2, "captured": 1}})")},
                          {}});
  auto backend = ra::make_mock(script);
  ra::HumanReview human;
  human.paper_id = "p";
  human.scores["Overall"] = 3;
  human.strengths = {"novel"};
  human.weaknesses = {"tiny eval set", "no code"};
  ra::ParsedReview llm;
  llm.scores["Overall"] = 3.5;
  llm.weaknesses = {"small evaluation"};
  const auto v = ra::judge_recall(backend, reg, human, llm);
  EXPECT_TRUE(v.valid);
  EXPECT_EQ(v.attempts, 2);
  EXPECT_EQ(v.s_recall(), 1.0);
  EXPECT_EQ(v.w_recall(), 0.5);
  human.strengths.clear();
  human.weaknesses.clear();
  EXPECT_THROW(ra::judge_recall(backend, reg, human, llm), ra::UsageError);
}

TEST(AlignPrompt, PerfectPredictorGivesZeroMae) {
  const auto corpus = make_corpus({{"a1", ra::Split::Accepted, {3, 4}},
                                   {"a2", ra::Split::Accepted, {4.5}},
                                   {"a3", ra::Split::Accepted, {2, 2.5}},
                                   {"r1", ra::Split::Rejected, {2, 3}},
                                   {"r2", ra::Split::Rejected, {1.5}},
                                   {"r3", ra::Split::Rejected, {3.5, 4}},
                                   {"r4", ra::Split::Rejected, {}}});
  std::vector<ra::GeneratedReview> reviews;
  for (int run = 0; run < 3; ++run) {
    for (const auto& [id, list] : corpus.reviews) {
      double sum = 0;
      for (const auto& h : list) sum += h.overall();
      reviews.push_back(generated(id, run, sum / list.size()));
    }
    reviews.push_back(generated("r4", run, 3.0));
  }
  const auto pa = ra::align_prompt("m", "p", reviews, corpus);
  for (auto scope : ra::kScopes) {
    const auto& cell = pa.cells.at(scope);
    EXPECT_EQ(cell.mae.mean, 0.0) << ra::to_string(scope);
    EXPECT_EQ(cell.mae.std, 0.0);
    EXPECT_EQ(cell.mae.n, 3u);
    EXPECT_TRUE(cell.r.defined());
  }
  EXPECT_EQ(pa.cells.at(ra::Scope::rejected).n_papers, 3u);
  EXPECT_EQ(pa.cells.at(ra::Scope::rejected).n_excluded, 3u);  // reviewless r4, once per run
  EXPECT_EQ(pa.cells.at(ra::Scope::combined).n_papers, 6u);
}

TEST(AlignPrompt, ConstantModelReproducesBaselineRow) {
  const auto corpus = make_corpus({{"a1", ra::Split::Accepted, {3, 4}},
                                   {"a2", ra::Split::Accepted, {4.5}},
                                   {"r1", ra::Split::Rejected, {2, 3}},
                                   {"r2", ra::Split::Rejected, {1.5, 1}}});
  std::vector<ra::GeneratedReview> reviews;
  for (const auto& s : corpus.submissions) reviews.push_back(generated(s.id, 0, 2.5));
  const auto model = ra::align_prompt("m", "const", reviews, corpus);
  const auto base = ra::constant_baseline(corpus, 2.5);
  for (auto scope : ra::kScopes) {
    EXPECT_EQ(model.cells.at(scope).mae.mean, base.cells.at(scope).mae.mean);
    EXPECT_FALSE(base.cells.at(scope).r.defined());
  }
  // accepted: |2.5-3.5| and |2.5-4.5| -> 1.5; rejected: 0 and 1.25 -> 0.625
  EXPECT_DOUBLE_EQ(base.cells.at(ra::Scope::accepted).mae.mean, 1.5);
  EXPECT_DOUBLE_EQ(base.cells.at(ra::Scope::rejected).mae.mean, 0.625);
  EXPECT_DOUBLE_EQ(base.cells.at(ra::Scope::combined).mae.mean, 1.0625);
}

TEST(AlignPrompt, RunsAggregateWithPopulationStd) {
  const auto corpus = make_corpus({{"a1", ra::Split::Accepted, {3}}, {"r1", ra::Split::Rejected, {2}}});
  std::vector<ra::GeneratedReview> reviews{generated("a1", 0, 3.0), generated("r1", 0, 2.0),
                                           generated("a1", 1, 4.0), generated("r1", 1, 3.0),
                                           generated("a1", 2, std::nullopt), generated("r1", 2, 2.0)};
  const auto pa = ra::align_prompt("m", "p", reviews, corpus);
  const auto& acc = pa.cells.at(ra::Scope::accepted);
  EXPECT_EQ(acc.mae.n, 2u);  // run 2 has no scorable accepted review
  EXPECT_DOUBLE_EQ(acc.mae.mean, 0.5);
  EXPECT_DOUBLE_EQ(acc.mae.std, 0.5);
  EXPECT_EQ(acc.n_excluded, 1u);
  EXPECT_FALSE(acc.r.defined());
  EXPECT_EQ(pa.cells.at(ra::Scope::combined).mae.n, 2u);
}

TEST(Aggregate, AllRowAndBestPrompt) {
  auto with = [](std::string name, double mae, std::optional<double> r) {
    ra::PromptAlignment p{"m", std::move(name), {}};
    for (auto scope : ra::kScopes) {
      ra::AlignmentCell c;
      c.mae = ra::mean_std({mae});
      if (r) c.r = ra::mean_std({*r});
      p.cells[scope] = c;
    }
    return p;
  };
  const std::vector<ra::PromptAlignment> prompts{with("a", 1.0, 0.1), with("b", 0.5, 0.3), with("c", 0.75, std::nullopt)};
  EXPECT_EQ(ra::best_prompt(prompts), 1u);
  EXPECT_FALSE(ra::best_prompt({with("c", 0.75, std::nullopt)}).has_value());
  const auto all = ra::aggregate_all("m", prompts);
  const auto& c = all.cells.at(ra::Scope::combined);
  EXPECT_DOUBLE_EQ(c.mae.mean, 0.75);
  EXPECT_NEAR(c.mae.std, std::sqrt((0.0625 + 0.0625 + 0.0) / 3), 1e-15);
  EXPECT_EQ(c.r.n, 2u);
  EXPECT_DOUBLE_EQ(c.r.mean, 0.2);
  EXPECT_EQ(all.prompt, "All");
}

TEST(HumanBaseline, PerSplitAndCombined) {
  const auto corpus = make_corpus({{"a1", ra::Split::Accepted, {2, 4}},
                                   {"a2", ra::Split::Accepted, {3, 3}},
                                   {"r1", ra::Split::Rejected, {1, 2}},
                                   {"r2", ra::Split::Rejected, {2}}});
  const auto hb = ra::human_baseline(corpus);
  EXPECT_DOUBLE_EQ(hb.cells.at(ra::Scope::accepted).mae.mean, 1.0);
  EXPECT_DOUBLE_EQ(hb.cells.at(ra::Scope::rejected).mae.mean, 1.0);
  EXPECT_DOUBLE_EQ(hb.cells.at(ra::Scope::combined).mae.mean, 1.0);
  EXPECT_EQ(hb.cells.at(ra::Scope::rejected).n_papers, 1u);
}
