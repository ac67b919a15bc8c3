#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "review_arcade/error.hpp"
#include "review_arcade/review_engine.hpp"
#include "review_arcade/util.hpp"
#include "test_support.hpp"

namespace ra = review_arcade;

namespace {

const ra::PromptRegistry& registry() {
  static const auto reg = ra::PromptRegistry::load_bundled();
  return reg;
}

ra::Submission paper(std::string id = "p1", std::string body = "# Title\n\nSome body text.\n") {
  ra::Submission s;
  s.id = std::move(id);
  s.body = std::move(body);
  s.token_count = ra::count_whitespace_tokens(s.body);
  return s;
}

ra::BackendConfig mock_replying(std::vector<std::string> texts) {
  ra::MockScript script;
  ra::MockRule rule;
  for (auto& t : texts) rule.replies.push_back(ra::MockReply::ok(std::move(t)));
  script.rules.push_back(std::move(rule));
  return ra::make_mock(script);
}

const char* kValid =
    R"({"Scores": {"Overall": 3.0, "Soundness": 2.5, "Acceptance": "Reject"},
        "Strengths": ["clear writing"], "Weaknesses": ["small dataset", "no ablation"]})";

}  // namespace

TEST(ParseReview, DirectFields) {
  const auto r = ra::parse_review_text(
      R"({"Scores":{"Overall":3.5,"Soundness":3},"Strengths":[],"Weaknesses":[]})");
  EXPECT_EQ(r.overall(), 3.5);
  EXPECT_EQ(r.scores.at("Soundness"), 3.0);
  EXPECT_TRUE(r.strengths.empty());
}

TEST(ParseReview, NullAndStringScores) {
  const auto nulled = ra::parse_review_text(R"({"Scores":{"Overall":null,"Soundness":4}})");
  EXPECT_FALSE(nulled.overall().has_value());
  EXPECT_EQ(nulled.scores.at("Soundness"), 4.0);
  EXPECT_EQ(ra::parse_review_text(R"({"Scores":{"Overall":"4"}})").overall(), 4.0);
  EXPECT_EQ(ra::parse_review_text(R"({"Scores":{"Overall":" 2.5 "}})").overall(), 2.5);
  EXPECT_FALSE(ra::parse_review_text(R"({"Scores":{"Overall":"four"}})").overall().has_value());
}

TEST(ParseReview, AcceptanceLabelOrNumber) {
  const auto label = ra::parse_review_text(R"({"Scores":{"Overall":3,"Acceptance":"accept"}})");
  EXPECT_EQ(label.acceptance_label, "Accept");
  EXPECT_FALSE(label.scores.count("Acceptance"));
  const auto number = ra::parse_review_text(R"({"Scores":{"Overall":3,"acceptance":4}})");
  EXPECT_EQ(number.scores.at("Acceptance"), 4.0);
  EXPECT_FALSE(number.acceptance_label.has_value());
}

TEST(ParseReview, RepairsCommonWrappers) {
  const auto expected = ra::parse_review_text(kValid);
  EXPECT_EQ(ra::parse_review_text(std::string("```json\n") + kValid + "\n```"), expected);
  EXPECT_EQ(ra::parse_review_text(std::string("Here is my review {as requested}:\n") + kValid + "\nThanks!"),
            expected);
  EXPECT_EQ(ra::parse_review_text(
                R"({"Scores": {"Overall": 3.0, "Soundness": 2.5, "Acceptance": "Reject",},
                    "Strengths": ["clear writing",], "Weaknesses": ["small dataset", "no ablation"],})"),
            expected);
  const auto braces = ra::parse_review_text(R"({"Scores":{"Overall":2},"Weaknesses":["uses } and { in text"]})");
  EXPECT_EQ(braces.weaknesses, std::vector<std::string>{"uses } and { in text"});
  const auto nested = ra::parse_review_text(R"({"review": {"scores": {"overall": 4.5}}})");
  EXPECT_EQ(nested.overall(), 4.5);
}

TEST(ParseReview, CoercesLists) {
  const auto r = ra::parse_review_text(
      R"({"Scores":{"Overall":3},"Strengths":"- one\n- two\n\n","Weaknesses":[1, "w", null]})");
  EXPECT_EQ(r.strengths, (std::vector<std::string>{"one", "two"}));
  EXPECT_EQ(r.weaknesses, (std::vector<std::string>{"1", "w"}));
}

TEST(ParseReview, Failures) {
  EXPECT_THROW(ra::parse_review_text("I think this paper is fine. Score: 3."), ra::ParseError);
  EXPECT_THROW(ra::parse_review_text(R"({"Overall": 3})"), ra::ParseError);
  EXPECT_THROW(ra::parse_review_text(R"({"Scores": [3]})"), ra::ParseError);
  EXPECT_THROW(ra::parse_review_text(R"({"Scores": {"Overall": 3})"), ra::ParseError);
  EXPECT_THROW(ra::parse_review_text(""), ra::ParseError);
}

TEST(ParseReview, SerializeRoundTrip) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> half(2, 10);
  const std::vector<std::string> pool{"plain", "quote \" inside", "brace } {", "unicode \xC3\xA9", "line\nbreak",
                                      "back\\slash"};
  for (int trial = 0; trial < 200; ++trial) {
    ra::ParsedReview r;
    r.scores["Overall"] = half(rng) / 2.0;
    if (trial % 2) r.scores["Soundness"] = half(rng) / 2.0 + 0.1;
    if (trial % 3 == 0) r.acceptance_label = trial % 2 ? "Accept" : "Reject";
    if (trial % 3 == 1) r.scores["Acceptance"] = half(rng) / 2.0;
    for (int k = 0; k < trial % 4; ++k) r.strengths.push_back(pool[(trial + k) % pool.size()]);
    for (int k = 0; k < trial % 3; ++k) r.weaknesses.push_back(pool[(trial * 3 + k) % pool.size()]);
    EXPECT_EQ(ra::parse_review_text(ra::serialize_review_text(r)), r) << trial;
  }
}

TEST(ValidateScores, ClampAndSnap) {
  auto with = [](double v) {
    ra::ParsedReview r;
    r.scores["Overall"] = v;
    return r;
  };
  std::vector<std::string> log;
  EXPECT_EQ(ra::validate_scores(with(5.7), false, &log).overall(), 5.0);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0], "Overall: 5.7 -> 5");
  EXPECT_EQ(ra::validate_scores(with(0.2), false).overall(), 1.0);
  EXPECT_EQ(ra::validate_scores(with(3.3), false).overall(), 3.3);
  EXPECT_EQ(ra::validate_scores(with(3.3), true).overall(), 3.5);
  EXPECT_EQ(ra::validate_scores(with(3.2), true).overall(), 3.0);
  EXPECT_EQ(ra::validate_scores(with(3.25), true).overall(), 3.5);
  EXPECT_EQ(ra::validate_scores(with(3.75), true).overall(), 4.0);
  EXPECT_FALSE(ra::validate_scores(with(std::nan("")), true).overall().has_value());
}

TEST(ValidateScores, IdempotentAndOnGridWhenSnapped) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 8.0);
  for (int i = 0; i < 2000; ++i) {
    ra::ParsedReview r;
    r.scores["Overall"] = u(rng);
    r.scores["Soundness"] = u(rng);
    for (bool snap : {false, true}) {
      const auto once = ra::validate_scores(r, snap);
      std::vector<std::string> log;
      EXPECT_EQ(ra::validate_scores(once, snap, &log), once);
      EXPECT_TRUE(log.empty());
      for (const auto& [k, v] : once.scores) {
        EXPECT_GE(v, 1.0);
        EXPECT_LE(v, 5.0);
        if (snap) EXPECT_TRUE(ra::on_review_grid(v)) << v;
      }
    }
  }
}

TEST(GenerateReview, ValidMockReply) {
  auto backend = mock_replying({kValid});
  const auto r = ra::generate_review(backend, registry(), "default", paper(), 0);
  EXPECT_TRUE(r.valid);
  EXPECT_EQ(r.overall(), 3.0);
  EXPECT_EQ(r.attempts, 1);
  EXPECT_EQ(r.raw_text, kValid);
  EXPECT_EQ(r.model_name, "mock-model");
  const auto transcript = backend.mock->transcript();
  ASSERT_EQ(transcript.size(), 1u);
  EXPECT_EQ(transcript[0].trace_key, "review/default/p1/run0/attempt1");
}

TEST(GenerateReview, FencedReplyRepaired) {
  auto backend = mock_replying({std::string("```json\n") + kValid + "\n```"});
  EXPECT_EQ(ra::generate_review(backend, registry(), "simple", paper(), 1).overall(), 3.0);
}

TEST(GenerateReview, ProseExhaustsParseBudget) {
  auto backend = mock_replying({"I liked it."});
  const auto r = ra::generate_review(backend, registry(), "simple", paper(), 0);
  EXPECT_FALSE(r.valid);
  EXPECT_FALSE(r.scorable());
  EXPECT_EQ(r.attempts, 3);
  EXPECT_EQ(backend.mock->calls(), 3u);
  EXPECT_NE(r.failure_reason.find("no JSON object"), std::string::npos);
}

TEST(GenerateReview, RetriesThenSucceeds) {
  auto backend = mock_replying({"garbage", kValid});
  const auto r = ra::generate_review(backend, registry(), "simple", paper(), 0);
  EXPECT_TRUE(r.valid);
  EXPECT_EQ(r.attempts, 2);
  EXPECT_TRUE(r.failure_reason.empty());
}

TEST(GenerateReview, SendsPaperAsUserMessage) {
  ra::MockScript script;
  script.rules.push_back({{"Review this paper.", "UNIQUE-BODY-MARKER"}, "", {ra::MockReply::ok(kValid)}, {}});
  auto backend = ra::make_mock(script);
  EXPECT_TRUE(ra::generate_review(backend, registry(), "simple", paper("x", "UNIQUE-BODY-MARKER"), 0).valid);
  EXPECT_THROW(ra::generate_review(backend, registry(), "simple", paper("x", "  \n"), 0), ra::UsageError);
  EXPECT_THROW(ra::generate_review(backend, registry(), "edit_default", paper(), 0), ra::UsageError);
  EXPECT_THROW(ra::generate_review(backend, registry(), "nope", paper(), 0), ra::PromptError);
}

TEST(GenerateReview, PureFunctionOfInputsOnMock) {
  auto run = [] {
    ra::MockScript script;
    script.rules.push_back({{}, "*/p2/run1/*", {ra::MockReply::ok(R"({"Scores":{"Overall":4}})")}, {}});
    script.fallback = ra::MockReply::ok(kValid);
    auto backend = ra::make_mock(script);
    std::vector<ra::GeneratedReview> out;
    for (const char* id : {"p1", "p2"}) {
      for (int k = 0; k < 2; ++k) out.push_back(ra::generate_review(backend, registry(), "acl", paper(id), k));
    }
    return out;
  };
  const auto a = run();
  EXPECT_EQ(a, run());
  EXPECT_EQ(a[3].overall(), 4.0);
  EXPECT_EQ(a[2].overall(), 3.0);
}

TEST(ReviewJournal, AppendReloadAndFinalize) {
  testing_support::TempDir dir;
  const auto path = dir.path() / "reviews" / "m" / "default.jsonl";
  ra::GeneratedReview a, b;
  a.paper_id = "z";
  a.run_index = 1;
  a.valid = true;
  a.parsed = ra::parse_review_text(kValid);
  a.raw_text = std::string("bad utf8 \xff tail");
  b.paper_id = "a";
  b.failure_reason = "unparseable";
  {
    ra::ReviewJournal j(path);
    j.append(a);
    j.append(b);
    EXPECT_TRUE(j.contains("z", 1));
    EXPECT_FALSE(j.contains("z", 0));
  }
  // torn write at the end of the file
  std::string text = ra::read_file(path);
  testing_support::write_text(path, text + R"({"paper_id": "q", "prom)");
  ra::ReviewJournal reloaded(path);
  EXPECT_EQ(reloaded.skipped_lines(), 1u);
  const auto records = reloaded.load();
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].paper_id, "a");
  EXPECT_EQ(records[1].parsed, a.parsed);
  EXPECT_EQ(records[1].raw_text, "bad utf8 \xEF\xBF\xBD tail");

  reloaded.finalize();
  const auto final_text = ra::read_file(path);
  EXPECT_EQ(final_text.find("\"paper_id\":\"a\""), final_text.find("\"paper_id\""));
  EXPECT_EQ(ra::split_lines(final_text).size(), 2u);
}

TEST(FormatReview, MarkdownSections) {
  const auto text = ra::format_review_for_prompt(ra::parse_review_text(kValid));
  EXPECT_EQ(text,
            "## Scores\n- Overall: 3\n- Soundness: 2.5\n- Acceptance: Reject\n\n"
            "## Summary of Strengths\n- clear writing\n\n"
            "## Summary of Weaknesses\n- small dataset\n- no ablation\n");
}
