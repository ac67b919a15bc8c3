#include <random>

#include <gtest/gtest.h>

#include "edit_fuzz.hpp"
#include "oracles.hpp"
#include "review_arcade/edit.hpp"
#include "review_arcade/prompt_registry.hpp"

using namespace review_arcade;

namespace {

const PromptRegistry& registry() {
  static const PromptRegistry reg = PromptRegistry::load_bundled();
  return reg;
}

EditProposal pair_edit(std::vector<Hunk> hunks) {
  EditProposal e;
  e.selected_action = "Copy-Editing";
  e.format = EditFormat::exact_pair;
  e.hunks = std::move(hunks);
  return e;
}

EditParseError::Kind parse_error_kind(const std::string& text, IsiSetting setting) {
  try {
    parse_edit(text, registry().taxonomy_for(setting), registry().taxonomy());
  } catch (const EditParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected EditParseError for: " << text;
  return EditParseError::Kind::no_hunk;
}

}  // namespace

TEST(ParseEdit, BracketedActionWithMinimalDiff) {
  const auto e = parse_edit("[Clarification]\n-old\n+new\n", registry().taxonomy_for(IsiSetting::constrained));
  EXPECT_EQ(e.format, EditFormat::git_diff);
  EXPECT_EQ(e.selected_action, "Clarification");
  ASSERT_EQ(e.hunks.size(), 1u);
  EXPECT_EQ(e.hunks[0], (Hunk{"old", "new"}));
}

TEST(ParseEdit, StructuredPair) {
  const auto e = parse_edit(R"({"selected_action":"Copy-Editing","exact_original_text":"teh","new_text":"the"})",
                            registry().taxonomy_for(IsiSetting::default_));
  EXPECT_EQ(e.format, EditFormat::exact_pair);
  EXPECT_EQ(e.selected_action, "Copy-Editing");
  ASSERT_EQ(e.hunks.size(), 1u);
  EXPECT_EQ(e.hunks[0], (Hunk{"teh", "the"}));
}

TEST(ParseEdit, AdversarialActionUnderConstrainedIsDisallowed) {
  EXPECT_EQ(parse_error_kind("[Hallucinated-Evidence]\n--- old\n+++ new\n", IsiSetting::constrained),
            EditParseError::Kind::disallowed_action);
  // Allowed under adversarial.
  const auto e = parse_edit("[Hallucinated-Evidence]\n--- old\n+++ new\n",
                            registry().taxonomy_for(IsiSetting::adversarial));
  EXPECT_EQ(e.selected_action, "Hallucinated-Evidence");
}

TEST(ParseEdit, ActionNamesMatchLoosely) {
  const auto& tax = registry().taxonomy_for(IsiSetting::constrained);
  EXPECT_EQ(parse_edit("**[copy editing]**\n-a\n+b", tax).selected_action, "Copy-Editing");
  EXPECT_EQ(parse_edit("Action: ACL-ification\n--- a\n+++ b", tax).selected_action, "ACL-ification");
}

TEST(ParseEdit, UnifiedDiffWithContextAndFence) {
  const std::string text =
      "I chose [Simplification].\n\n```diff\n--- a/paper.md\n+++ b/paper.md\n@@ -3,3 +3,3 @@\n"
      " The method\n-is extremely very complex\n+is complex\n and fast.\n```\n";
  const auto e = parse_edit(text, registry().taxonomy_for(IsiSetting::default_));
  EXPECT_EQ(e.format, EditFormat::git_diff);
  ASSERT_EQ(e.hunks.size(), 1u);
  EXPECT_EQ(e.hunks[0].original, "The method\nis extremely very complex\nand fast.");
  EXPECT_EQ(e.hunks[0].replacement, "The method\nis complex\nand fast.");
}

TEST(ParseEdit, TwoUnifiedHunks) {
  const std::string text = "[Copy-Editing]\n@@ -1 +1 @@\n-teh cat\n+the cat\n@@ -9 +9 @@\n-recieve\n+receive\n";
  const auto e = parse_edit(text, registry().taxonomy());
  ASSERT_EQ(e.hunks.size(), 2u);
  EXPECT_EQ(e.hunks[1], (Hunk{"recieve", "receive"}));
}

TEST(ParseEdit, ArrowForms) {
  const auto& tax = registry().taxonomy_for(IsiSetting::constrained);
  auto e = parse_edit("[Copy-Editing] [we propose a a method] -> [we propose a method]", tax);
  EXPECT_EQ(e.format, EditFormat::arrow);
  ASSERT_EQ(e.hunks.size(), 1u);
  EXPECT_EQ(e.hunks[0], (Hunk{"we propose a a method", "we propose a method"}));

  e = parse_edit("[Clarification]\n[see [1] above] \xE2\x86\x92 [see reference [1] above]", tax);
  ASSERT_EQ(e.hunks.size(), 1u);
  EXPECT_EQ(e.hunks[0], (Hunk{"see [1] above", "see reference [1] above"}));
}

TEST(ParseEdit, BulletListProseIsNotADiff) {
  const std::string text = "[Clarification]\nThe review says:\n- unclear notation\n- missing baselines\n";
  EXPECT_EQ(parse_error_kind(text, IsiSetting::constrained), EditParseError::Kind::no_hunk);
}

TEST(ParseEdit, ErrorKinds) {
  EXPECT_EQ(parse_error_kind("I made no change.", IsiSetting::default_), EditParseError::Kind::no_hunk);
  EXPECT_EQ(parse_error_kind("-old\n+new\n", IsiSetting::default_), EditParseError::Kind::missing_action);
  EXPECT_EQ(parse_error_kind("[Made-Up-Action]\n-old\n+new\n", IsiSetting::default_),
            EditParseError::Kind::missing_action);
  EXPECT_EQ(parse_error_kind(R"({"selected_action":"Teleport","exact_original_text":"a","new_text":"b"})",
                             IsiSetting::default_),
            EditParseError::Kind::disallowed_action);
  // Whitespace-only originals cannot be located.
  EXPECT_EQ(parse_error_kind(R"({"selected_action":"Copy-Editing","exact_original_text":"  ","new_text":"b"})",
                             IsiSetting::default_),
            EditParseError::Kind::no_hunk);
}

TEST(ParseEdit, EveryAdversarialOnlyActionRejectedOutsideAdversarial) {
  const auto& full = registry().taxonomy();
  int adversarial_only = 0;
  for (const auto& t : full) {
    if (t.tier != EditType::Tier::adversarial_only) continue;
    ++adversarial_only;
    for (auto setting : {IsiSetting::constrained, IsiSetting::default_}) {
      for (const std::string& text :
           {"[" + t.name + "]\n-x\n+y\n", "[" + t.name + "] [x] -> [y]",
            R"({"selected_action":")" + t.name + R"(","exact_original_text":"x","new_text":"y"})"}) {
        EXPECT_EQ(parse_error_kind(text, setting), EditParseError::Kind::disallowed_action)
            << t.name << " / " << to_string(setting);
      }
    }
  }
  EXPECT_EQ(adversarial_only, 10);
}

TEST(ParseEdit, FuzzCorpusNeverCrashesAndRecoversWellFormedHunks) {
  std::vector<std::string> names;
  for (const auto& t : registry().taxonomy()) names.push_back(t.name);
  const auto cases = edit_fuzz::make_corpus(20261016u, 400, names);
  for (const auto& c : cases) {
    try {
      const auto e = parse_edit(c.text, registry().taxonomy());
      if (c.expected) {
        EXPECT_EQ(e.hunks, *c.expected) << c.text;
        EXPECT_EQ(e.selected_action, c.action) << c.text;
      }
    } catch (const EditParseError& err) {
      EXPECT_FALSE(c.expected.has_value()) << err.what() << "\n" << c.text;
    }
  }
}

TEST(ApplyEdit, ExactReplace) {
  const auto r = apply_edit("a b c", pair_edit({{"b", "B"}}));
  ASSERT_TRUE(r.ok);
  EXPECT_EQ(r.body, "a B c");
  EXPECT_FALSE(r.hunks[0].normalized);
}

TEST(ApplyEdit, NormalizedMatchAgreesWithRegexOracle) {
  const std::string body = "a  b\nc";
  const auto r = apply_edit(body, pair_edit({{"a b c", "X"}}));
  ASSERT_TRUE(r.ok);
  EXPECT_EQ(r.body, "X");
  EXPECT_TRUE(r.hunks[0].normalized);
  const auto [b, e] = oracle::normalized_find(body, "a b c");
  EXPECT_EQ(r.hunks[0].offset, b);
  EXPECT_EQ(r.hunks[0].old_length, e - b);
}

TEST(ApplyEdit, AbsentNeedleLeavesBodyUnchanged) {
  const auto r = apply_edit("abc", pair_edit({{"zzz", "y"}}));
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.body, "abc");
  EXPECT_FALSE(r.failure_reason.empty());
}

TEST(ApplyEdit, FirstOccurrenceOnly) {
  EXPECT_EQ(apply_edit("x y x", pair_edit({{"x", "z"}})).body, "z y x");
}

TEST(ApplyEdit, HunksApplyInOrderAndAtomically) {
  auto r = apply_edit("one two three", pair_edit({{"one", "1"}, {"1 two", "12"}}));
  ASSERT_TRUE(r.ok);
  EXPECT_EQ(r.body, "12 three");

  r = apply_edit("one two three", pair_edit({{"one", "1"}, {"missing", "?"}}));
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.body, "one two three");
  EXPECT_TRUE(r.hunks.empty());
}

// Exact occurrences win; otherwise the replaced span must be exactly the one
// the regex oracle finds, on bodies with assorted whitespace runs.
TEST(ApplyEdit, NormalizedSpanMatchesOracleOnRandomBodies) {
  std::mt19937 rng(7);
  const std::vector<std::string> words{"alpha", "beta", "(x)", "y+z", "a.b", "[r]", "gamma"};
  const std::vector<std::string> gaps{" ", "  ", "\n", " \t ", "\r\n"};
  std::uniform_int_distribution<std::size_t> w(0, words.size() - 1), g(0, gaps.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> toks;
    std::string body;
    for (int i = 0; i < 12; ++i) {
      toks.push_back(words[w(rng)]);
      body += toks.back();
      body += gaps[g(rng)];
    }
    std::uniform_int_distribution<int> start(0, 9), len(1, 3);
    const int s = start(rng), n = len(rng);
    std::string needle;
    for (int i = s; i < s + n; ++i) needle += (i > s ? " " : "") + toks[i];
    auto [ob, oe] = oracle::normalized_find(body, needle);
    ASSERT_NE(ob, std::string::npos);
    if (const auto exact = body.find(needle); exact != std::string::npos) {
      ob = exact;
      oe = exact + needle.size();
    }
    const auto r = apply_edit(body, pair_edit({{needle, "#"}}));
    ASSERT_TRUE(r.ok);
    EXPECT_EQ(r.hunks[0].offset, ob) << body << " | " << needle;
    EXPECT_EQ(r.hunks[0].old_length, oe - ob) << body << " | " << needle;
    EXPECT_EQ(r.body, body.substr(0, ob) + "#" + body.substr(oe));
  }
}

TEST(ApplyEdit, InverseHunkRestoresBody) {
  std::mt19937 rng(11);
  const std::vector<std::string> words{"We", "propose", "a", "model", "results", "(Table 2)", "naïve",
                                       "accuracy", "\n\n", "## Method", "robust", "of"};
  std::uniform_int_distribution<std::size_t> w(0, words.size() - 1);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::string body;
    for (int i = 0; i < 40; ++i) body += words[w(rng)] + (i % 7 == 6 ? "\n" : " ");
    std::uniform_int_distribution<std::size_t> pos(0, body.size() - 2);
    const std::size_t b = pos(rng);
    std::uniform_int_distribution<std::size_t> len(1, std::min<std::size_t>(30, body.size() - b));
    const std::string original = body.substr(b, len(rng));
    const std::string replacement = "<<edit " + std::to_string(trial) + ">>";
    const auto fwd = apply_edit(body, pair_edit({{original, replacement}}));
    ASSERT_TRUE(fwd.ok);
    const auto back = apply_edit(fwd.body, pair_edit({{replacement, original}}));
    ASSERT_TRUE(back.ok);
    // The forward edit hits the first occurrence, so restoration holds when
    // the chosen span is that occurrence.
    if (body.find(original) == b) {
      EXPECT_EQ(back.body, body);
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}
