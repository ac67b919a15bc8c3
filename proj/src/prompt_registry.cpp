#include "review_arcade/prompt_registry.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "review_arcade/error.hpp"
#include "review_arcade/util.hpp"

namespace review_arcade {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 5> kCanonicalReviewPrompts{"simple", "default", "ai_generated",
                                                                   "acl", "acl_senior"};

const char* kEditUserTemplate = "# REVIEW\n\n${review}\n\n# PAPER\n\n${paper}";
const char* kJudgeUserTemplate = "# HUMAN REVIEW\n\n${human_review}\n\n# LLM REVIEW\n\n${review}";

bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

// Appends an output-format block. When the instructions already end with
// the block's lead line, only the remainder is appended.
std::string with_output_format(const std::string& instructions, const std::string& format) {
  const std::string body = strip_trailing_newlines(instructions);
  const std::string fmt_text = strip_trailing_newlines(format);
  const auto nl = fmt_text.find('\n');
  const std::string lead = fmt_text.substr(0, nl);
  if (nl != std::string::npos && body.size() >= lead.size() &&
      body.compare(body.size() - lead.size(), lead.size(), lead) == 0) {
    return body + fmt_text.substr(nl) + "\n";
  }
  return body + "\n\n" + fmt_text + "\n";
}

}  // namespace

std::string_view to_string(IsiSetting s) {
  switch (s) {
    case IsiSetting::baseline: return "baseline";
    case IsiSetting::constrained: return "constrained";
    case IsiSetting::default_: return "default";
    case IsiSetting::adversarial: return "adversarial";
  }
  return "unknown";
}

std::optional<IsiSetting> parse_setting(std::string_view s) {
  for (IsiSetting setting : kIsiSettings) {
    if (to_string(setting) == s) return setting;
  }
  return std::nullopt;
}

std::string substitute(std::string_view tmpl, const Bindings& bindings) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    const auto open = tmpl.find("${", i);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    out.append(tmpl.substr(i, open - i));
    std::size_t j = open + 2;
    while (j < tmpl.size() && is_ident_char(tmpl[j])) ++j;
    if (j == open + 2 || j >= tmpl.size() || tmpl[j] != '}') {
      // not a placeholder; keep literally
      out.append("${");
      i = open + 2;
      continue;
    }
    const auto name = tmpl.substr(open + 2, j - open - 2);
    auto it = bindings.find(name);
    if (it == bindings.end()) throw PromptError(fmt::format("unbound placeholder ${{{}}}", name));
    out.append(it->second);
    i = j + 1;
  }
  return out;
}

std::string render_taxonomy(const std::vector<EditType>& types) {
  std::string out = "ALLOWED ACTIONS:";
  for (const auto& t : types) out += fmt::format("\n- {}: {}", t.name, t.description);
  return out;
}

std::vector<EditType> load_taxonomy(const fs::path& path) {
  std::vector<EditType> types;
  try {
    const auto doc = json::parse(read_file(path));
    std::set<std::string> seen;
    for (const auto& e : doc.at("edit_types")) {
      EditType t;
      t.name = e.at("name").get<std::string>();
      t.description = e.at("description").get<std::string>();
      const auto tier = e.value("tier", "base");
      if (tier == "base") {
        t.tier = EditType::Tier::base;
      } else if (tier == "adversarial_only") {
        t.tier = EditType::Tier::adversarial_only;
      } else {
        throw PromptError(fmt::format("{}: unknown tier '{}' for {}", path.string(), tier, t.name));
      }
      if (t.name.empty() || !seen.insert(t.name).second) {
        throw PromptError(fmt::format("{}: empty or duplicate edit type '{}'", path.string(), t.name));
      }
      types.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw PromptError(fmt::format("{}: {}", path.string(), e.what()));
  }
  if (types.empty()) throw PromptError(fmt::format("{}: no edit types", path.string()));
  return types;
}

fs::path PromptRegistry::bundled_prompt_dir() { return fs::path(REVIEW_ARCADE_DATA_DIR) / "prompts"; }

fs::path PromptRegistry::bundled_taxonomy_file() {
  return fs::path(REVIEW_ARCADE_DATA_DIR) / "taxonomy" / "edit_types.json";
}

PromptRegistry PromptRegistry::load_bundled() { return load(bundled_prompt_dir(), bundled_taxonomy_file()); }

PromptRegistry PromptRegistry::load(const fs::path& prompt_dir, const fs::path& taxonomy_file) {
  PromptRegistry reg;
  auto read = [&](const std::string& rel) {
    const auto path = prompt_dir / rel;
    if (!fs::exists(path)) throw PromptError(fmt::format("prompt file missing: {}", path.string()));
    auto text = read_file(path);
    reg.file_hashes_["prompts/" + rel] = sha256_hex(text);
    return text;
  };

  const auto review_dir = prompt_dir / "review";
  if (!fs::is_directory(review_dir)) {
    throw PromptError(fmt::format("prompt directory missing: {}", review_dir.string()));
  }
  const std::string review_format = read("review/output_format.txt");
  std::vector<std::string> review_files;
  for (const auto& entry : fs::directory_iterator(review_dir)) {
    const auto p = entry.path();
    if (p.extension() == ".txt" && p.stem() != "output_format") review_files.push_back(p.stem().string());
  }
  std::sort(review_files.begin(), review_files.end());
  for (const auto& name : review_files) {
    PromptSpec spec;
    spec.name = name;
    spec.kind = PromptKind::review;
    spec.system_template = with_output_format(read("review/" + name + ".txt"), review_format);
    spec.user_template = "${paper}";
    spec.schema_id = "review";
    reg.prompts_[name] = std::move(spec);
  }

  const std::string edit_format = read("edit/output_format.txt");
  for (IsiSetting setting : {IsiSetting::constrained, IsiSetting::default_, IsiSetting::adversarial}) {
    PromptSpec spec;
    spec.name = fmt::format("edit_{}", to_string(setting));
    spec.kind = PromptKind::edit;
    spec.system_template = read(fmt::format("edit/{}.txt", to_string(setting)));
    if (setting == IsiSetting::adversarial) {
      spec.system_template = with_output_format(spec.system_template, edit_format);
    }
    spec.user_template = kEditUserTemplate;
    spec.schema_id = "edit";
    spec.setting = setting;
    reg.prompts_[spec.name] = std::move(spec);
  }

  PromptSpec judge;
  judge.name = "judge";
  judge.kind = PromptKind::judge;
  judge.system_template = with_output_format(read("judge/recall.txt"), read("judge/output_format.txt"));
  judge.user_template = kJudgeUserTemplate;
  judge.schema_id = "judge_recall";
  reg.prompts_["judge"] = std::move(judge);

  reg.taxonomy_ = load_taxonomy(taxonomy_file);
  reg.file_hashes_["taxonomy/" + taxonomy_file.filename().string()] = sha256_hex(read_file(taxonomy_file));
  return reg;
}

bool PromptRegistry::has_prompt(std::string_view name) const { return prompts_.find(name) != prompts_.end(); }

const PromptSpec& PromptRegistry::get_prompt(std::string_view name) const {
  auto it = prompts_.find(name);
  if (it == prompts_.end()) throw PromptError(fmt::format("unknown prompt '{}'", name));
  return it->second;
}

std::vector<std::string> PromptRegistry::review_prompt_names() const {
  std::vector<std::string> names;
  for (auto canonical : kCanonicalReviewPrompts) {
    if (has_prompt(canonical)) names.emplace_back(canonical);
  }
  for (const auto& [name, spec] : prompts_) {
    if (spec.kind != PromptKind::review) continue;
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
  }
  return names;
}

const PromptSpec& PromptRegistry::edit_prompt(IsiSetting setting) const {
  if (setting == IsiSetting::baseline) throw PromptError("baseline setting has no edit prompt");
  return get_prompt(fmt::format("edit_{}", to_string(setting)));
}

std::vector<EditType> PromptRegistry::taxonomy_for(IsiSetting setting) const {
  if (setting == IsiSetting::baseline) throw PromptError("baseline setting has no taxonomy");
  if (setting == IsiSetting::adversarial) return taxonomy_;
  std::vector<EditType> base;
  std::copy_if(taxonomy_.begin(), taxonomy_.end(), std::back_inserter(base),
               [](const EditType& t) { return t.tier == EditType::Tier::base; });
  return base;
}

RenderedPrompt PromptRegistry::render(const PromptSpec& spec, const Bindings& bindings) const {
  const Bindings* effective = &bindings;
  Bindings with_taxonomy;
  if (spec.setting && !bindings.count("taxonomy")) {
    with_taxonomy = bindings;
    with_taxonomy["taxonomy"] = render_taxonomy(taxonomy_for(*spec.setting));
    effective = &with_taxonomy;
  }
  return {substitute(spec.system_template, *effective), substitute(spec.user_template, *effective)};
}

}  // namespace review_arcade
