#pragma once

// Review, edit and judge prompts plus the edit taxonomy, loaded from data
// files and rendered into (system, user) message pairs.
//
// Layout under the prompt directory:
//   review/<name>.txt         review instructions; review/output_format.txt is appended
//   edit/{constrained,default,adversarial}.txt
//   edit/output_format.txt    appended to the adversarial prompt only
//   judge/recall.txt, judge/output_format.txt

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace review_arcade {

enum class IsiSetting { baseline, constrained, default_, adversarial };

std::string_view to_string(IsiSetting s);
std::optional<IsiSetting> parse_setting(std::string_view s);

inline constexpr std::array<IsiSetting, 4> kIsiSettings{IsiSetting::baseline, IsiSetting::constrained,
                                                        IsiSetting::default_, IsiSetting::adversarial};

struct EditType {
  enum class Tier { base, adversarial_only };
  std::string name;
  std::string description;
  Tier tier = Tier::base;

  friend bool operator==(const EditType&, const EditType&) = default;
};

enum class PromptKind { review, edit, judge };

struct PromptSpec {
  std::string name;
  PromptKind kind = PromptKind::review;
  std::string system_template;
  std::string user_template;
  std::string schema_id;  // "review", "edit" or "judge_recall"
  std::optional<IsiSetting> setting;  // edit prompts only
};

struct RenderedPrompt {
  std::string system_text;
  std::string user_text;

  friend bool operator==(const RenderedPrompt&, const RenderedPrompt&) = default;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Replaces every `${name}` in `tmpl` with its binding in one left-to-right
/// pass; substituted text is never rescanned. Throws PromptError naming the
/// first unbound placeholder.
std::string substitute(std::string_view tmpl, const Bindings& bindings);

// "ALLOWED ACTIONS:" followed by one "- Name: description" line per type.
std::string render_taxonomy(const std::vector<EditType>& types);

std::vector<EditType> load_taxonomy(const std::filesystem::path& path);

class PromptRegistry {
 public:
  static PromptRegistry load(const std::filesystem::path& prompt_dir,
                             const std::filesystem::path& taxonomy_file);
  // The prompt and taxonomy files shipped with the source tree.
  static PromptRegistry load_bundled();

  static std::filesystem::path bundled_prompt_dir();
  static std::filesystem::path bundled_taxonomy_file();

  bool has_prompt(std::string_view name) const;
  // Throws PromptError for unknown names.
  const PromptSpec& get_prompt(std::string_view name) const;

  // Known names first in their canonical order, then any extra files alphabetically.
  std::vector<std::string> review_prompt_names() const;

  const PromptSpec& edit_prompt(IsiSetting setting) const;
  const PromptSpec& judge_prompt() const { return get_prompt("judge"); }

  const std::vector<EditType>& taxonomy() const { return taxonomy_; }
  // 8 base types for constrained/default, all types for adversarial.
  // Throws PromptError for baseline.
  std::vector<EditType> taxonomy_for(IsiSetting setting) const;

  /// Substitutes `bindings` into both templates. Edit prompts get
  /// `${taxonomy}` bound to their setting's taxonomy unless overridden.
  RenderedPrompt render(const PromptSpec& spec, const Bindings& bindings) const;

  // Relative path -> sha256 of every file the registry was built from.
  const std::map<std::string, std::string>& file_hashes() const { return file_hashes_; }

 private:
  std::map<std::string, PromptSpec, std::less<>> prompts_;
  std::vector<EditType> taxonomy_;
  std::map<std::string, std::string> file_hashes_;
};

}  // namespace review_arcade
