#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "pinned_hashes.hpp"
#include "review_arcade/error.hpp"
#include "review_arcade/prompt_registry.hpp"
#include "test_support.hpp"

namespace ra = review_arcade;

namespace {

const ra::PromptRegistry& registry() {
  static const auto reg = ra::PromptRegistry::load_bundled();
  return reg;
}

std::set<std::string> names_of(const std::vector<ra::EditType>& types) {
  std::set<std::string> out;
  for (const auto& t : types) out.insert(t.name);
  return out;
}

std::size_t count_lines_starting_with(const std::string& text, const std::string& prefix) {
  std::size_t n = 0, pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    if (text.compare(pos, prefix.size(), prefix) == 0) ++n;
    pos = end + 1;
  }
  return n;
}

}  // namespace

TEST(PromptRegistry, BundledFilesMatchPinnedHashes) {
  const auto& hashes = registry().file_hashes();
  EXPECT_EQ(hashes.size(), kPinnedDataHashes.size());
  for (const auto& [path, hash] : kPinnedDataHashes) {
    auto it = hashes.find(path);
    ASSERT_NE(it, hashes.end()) << path;
    EXPECT_EQ(it->second, hash) << path;
  }
}

TEST(PromptRegistry, ReviewPromptsInCanonicalOrder) {
  EXPECT_EQ(registry().review_prompt_names(),
            (std::vector<std::string>{"simple", "default", "ai_generated", "acl", "acl_senior"}));
}

TEST(PromptRegistry, GetPrompt) {
  EXPECT_NE(registry().get_prompt("simple").system_template.find("Review this paper."), std::string::npos);
  EXPECT_NE(registry().get_prompt("acl_senior").system_template.find("strict, senior expert reviewer"),
            std::string::npos);
  EXPECT_THROW(registry().get_prompt("nonexistent"), ra::PromptError);
}

TEST(PromptRegistry, OutputFormatAppendedOnce) {
  for (const auto& name : registry().review_prompt_names()) {
    const auto& text = registry().get_prompt(name).system_template;
    const auto lead = text.find("Return the evaluation strictly in the following structure.");
    ASSERT_NE(lead, std::string::npos) << name;
    EXPECT_EQ(text.find("Return the evaluation strictly in the following structure.", lead + 1),
              std::string::npos)
        << name;
    EXPECT_NE(text.find("class JudgeResponse"), std::string::npos) << name;
  }
  EXPECT_EQ(registry().edit_prompt(ra::IsiSetting::constrained).system_template.find("exact_original_text\":"),
            std::string::npos);
  EXPECT_NE(registry().edit_prompt(ra::IsiSetting::adversarial).system_template.find("\"selected_action\""),
            std::string::npos);
}

TEST(PromptRegistry, TaxonomySizes) {
  const auto& reg = registry();
  EXPECT_EQ(reg.taxonomy_for(ra::IsiSetting::constrained).size(), 8u);
  EXPECT_EQ(reg.taxonomy_for(ra::IsiSetting::default_).size(), 8u);
  EXPECT_EQ(reg.taxonomy_for(ra::IsiSetting::adversarial).size(), 18u);
  EXPECT_THROW(reg.taxonomy_for(ra::IsiSetting::baseline), ra::PromptError);

  const auto constrained = names_of(reg.taxonomy_for(ra::IsiSetting::constrained));
  EXPECT_TRUE(constrained.count("Clarification"));
  EXPECT_FALSE(constrained.count("Hallucinated-Evidence"));
  EXPECT_EQ(constrained, names_of(reg.taxonomy_for(ra::IsiSetting::default_)));
  EXPECT_TRUE(names_of(reg.taxonomy_for(ra::IsiSetting::adversarial)).count("Factual-Optimization"));
}

TEST(PromptRegistry, EverySettingTaxonomyIsSubsetOfAdversarial) {
  const auto all = names_of(registry().taxonomy_for(ra::IsiSetting::adversarial));
  for (auto s : {ra::IsiSetting::constrained, ra::IsiSetting::default_, ra::IsiSetting::adversarial}) {
    for (const auto& name : names_of(registry().taxonomy_for(s))) EXPECT_TRUE(all.count(name)) << name;
  }
}

TEST(PromptRegistry, RenderedEditPromptListsExactlyTheSettingActions) {
  const auto& reg = registry();
  for (auto s : {ra::IsiSetting::constrained, ra::IsiSetting::default_, ra::IsiSetting::adversarial}) {
    const auto out = reg.render(reg.edit_prompt(s), {{"paper", "P"}, {"review", "R"}});
    const auto expected = reg.taxonomy_for(s).size();
    EXPECT_EQ(count_lines_starting_with(out.system_text, "- ") -
                  count_lines_starting_with(reg.edit_prompt(s).system_template, "- "),
              expected);
    for (const auto& t : reg.taxonomy_for(s)) {
      EXPECT_NE(out.system_text.find("- " + t.name + ": "), std::string::npos) << t.name;
    }
    EXPECT_EQ(out.system_text.find("${"), std::string::npos);
    EXPECT_EQ(out.user_text, "# REVIEW\n\nR\n\n# PAPER\n\nP");
  }
}

TEST(PromptRegistry, RenderErrorsAndPurity) {
  const auto& reg = registry();
  const auto& simple = reg.get_prompt("simple");
  try {
    reg.render(simple, {});
    FAIL() << "expected PromptError";
  } catch (const ra::PromptError& e) {
    EXPECT_NE(std::string(e.what()).find("${paper}"), std::string::npos);
  }
  const ra::Bindings b{{"paper", "body ${review} stays literal"}};
  const auto a = reg.render(simple, b);
  EXPECT_EQ(a, reg.render(simple, b));
  EXPECT_EQ(a.user_text, "body ${review} stays literal");
}

TEST(Substitute, Basics) {
  EXPECT_EQ(ra::substitute("a ${x} b ${x}", {{"x", "1"}}), "a 1 b 1");
  EXPECT_EQ(ra::substitute("cost $5 and ${ not} and ${}", {}), "cost $5 and ${ not} and ${}");
  EXPECT_THROW(ra::substitute("${missing}", {{"x", "1"}}), ra::PromptError);
}

TEST(PromptRegistry, OverrideDirectoryAddsPrompts) {
  testing_support::TempDir dir;
  const auto src = ra::PromptRegistry::bundled_prompt_dir();
  std::filesystem::copy(src, dir.path() / "prompts", std::filesystem::copy_options::recursive);
  testing_support::write_text(dir.path() / "prompts/review/terse.txt", "Be terse.\n");
  const auto reg = ra::PromptRegistry::load(dir.path() / "prompts", ra::PromptRegistry::bundled_taxonomy_file());
  const auto names = reg.review_prompt_names();
  ASSERT_EQ(names.size(), 6u);
  EXPECT_EQ(names.back(), "terse");
  EXPECT_EQ(reg.get_prompt("terse").system_template.rfind("Be terse.\n\nReturn the evaluation", 0), 0u);
}

TEST(Taxonomy, RejectsBadFiles) {
  testing_support::TempDir dir;
  const auto p = dir.path() / "t.json";
  testing_support::write_text(p, R"({"edit_types": [{"name": "A", "description": "x", "tier": "odd"}]})");
  EXPECT_THROW(ra::load_taxonomy(p), ra::PromptError);
  testing_support::write_text(p, R"({"edit_types": [{"name": "A", "description": "x"},
                                                    {"name": "A", "description": "y"}]})");
  EXPECT_THROW(ra::load_taxonomy(p), ra::PromptError);
  testing_support::write_text(p, "{}");
  EXPECT_THROW(ra::load_taxonomy(p), ra::PromptError);
}

TEST(IsiSetting, RoundTrip) {
  for (auto s : ra::kIsiSettings) EXPECT_EQ(ra::parse_setting(ra::to_string(s)), s);
  EXPECT_FALSE(ra::parse_setting("Default").has_value());
}
