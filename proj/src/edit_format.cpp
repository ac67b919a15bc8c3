#include "review_arcade/edit.hpp"

#include <cctype>
#include <optional>

#include <fmt/format.h>

#include "review_arcade/json_scan.hpp"
#include "review_arcade/util.hpp"

namespace review_arcade {

using nlohmann::json;

std::string_view to_string(EditFormat f) {
  switch (f) {
    case EditFormat::git_diff: return "git_diff";
    case EditFormat::arrow: return "arrow";
    case EditFormat::exact_pair: return "exact_pair";
  }
  return "unknown";
}

namespace {

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

// ---- action names ----------------------------------------------------------

std::string clean_action(std::string_view raw) {
  std::string s = trim(raw);
  auto strip = [&](std::string_view chars) {
    while (!s.empty() && chars.find(s.front()) != std::string_view::npos) s.erase(0, 1);
    while (!s.empty() && chars.find(s.back()) != std::string_view::npos) s.pop_back();
  };
  strip(" \t[]*\"'`.:");
  return s;
}

const EditType* lookup_action(std::string_view raw, const std::vector<EditType>& types) {
  const auto folded = fold_key(clean_action(raw));
  if (folded.empty()) return nullptr;
  for (const auto& t : types) {
    if (fold_key(t.name) == folded) return &t;
  }
  return nullptr;
}

// First "[Name]" whose Name is a known action; falls back to "Action: Name" lines.
std::optional<std::string> action_from_text(const std::string& text, const std::vector<EditType>& known) {
  for (auto open = text.find('['); open != std::string::npos; open = text.find('[', open + 1)) {
    const auto close = text.find(']', open + 1);
    if (close == std::string::npos) break;
    const auto inner = std::string_view(text).substr(open + 1, close - open - 1);
    if (inner.size() > 80 || inner.find('\n') != std::string_view::npos) continue;
    if (const auto* t = lookup_action(inner, known)) return t->name;
  }
  for (const auto& line : split_lines(text)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const auto label = fold_key(clean_action(line.substr(0, colon)));
    if (label == "action" || label == "selectedaction" || label == "editaction") {
      return clean_action(line.substr(colon + 1));
    }
  }
  return std::nullopt;
}

// ---- exact_pair ------------------------------------------------------------

std::optional<Hunk> pair_from(const json& obj) {
  const json* orig = find_key_folded(obj, "exact_original_text");
  const json* repl = find_key_folded(obj, "new_text");
  if (!orig || !repl || !orig->is_string() || !repl->is_string()) return std::nullopt;
  return Hunk{orig->get<std::string>(), repl->get<std::string>()};
}

struct JsonEdit {
  std::vector<Hunk> hunks;
  std::optional<std::string> action;
};

std::optional<JsonEdit> parse_json_edit(const std::string& text) {
  auto doc = find_json_object(text, [](const json& j) {
    const json* edits = find_key_folded(j, "edits");
    return find_key_folded(j, "exact_original_text") || (edits && edits->is_array());
  });
  if (!doc) return std::nullopt;
  JsonEdit out;
  auto take_action = [&](const json& obj) {
    const json* a = find_key_folded(obj, "selected_action");
    if (!out.action && a && a->is_string()) out.action = a->get<std::string>();
  };
  take_action(*doc);
  if (const json* edits = find_key_folded(*doc, "edits"); edits && edits->is_array()) {
    for (const auto& e : *edits) {
      if (!e.is_object()) continue;
      take_action(e);
      if (auto h = pair_from(e)) out.hunks.push_back(std::move(*h));
    }
  }
  if (auto h = pair_from(*doc)) out.hunks.push_back(std::move(*h));
  return out;
}

// ---- git_diff --------------------------------------------------------------

std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  return out;
}

bool is_file_header(std::string_view line) {
  return starts_with(line, "diff --git") || starts_with(line, "index ") || starts_with(line, "--- a/") ||
         starts_with(line, "+++ b/") || starts_with(line, "--- /dev/null") || starts_with(line, "+++ /dev/null");
}

std::vector<std::string> diff_lines(const std::string& text) {
  std::vector<std::string> all;
  for (auto line : split_lines(text)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    all.push_back(std::move(line));
  }
  // Prefer the contents of ```diff / ```patch fences when present.
  std::vector<std::string> fenced;
  bool in_fence = false, fence_is_diff = false;
  for (const auto& line : all) {
    if (starts_with(line, "```")) {
      if (in_fence) {
        in_fence = false;
      } else {
        in_fence = true;
        const auto lang = fold_key(trim(std::string_view(line).substr(3)));
        fence_is_diff = lang == "diff" || lang == "patch" || lang == "udiff";
      }
      continue;
    }
    if (in_fence && fence_is_diff) fenced.push_back(line);
  }
  return fenced.empty() ? all : fenced;
}

std::vector<Hunk> parse_unified(const std::vector<std::string>& lines) {
  std::vector<Hunk> hunks;
  std::vector<std::string> orig, repl;
  bool in_hunk = false, changed = false;
  auto flush = [&] {
    while (!orig.empty() && !repl.empty() && orig.back().empty() && repl.back().empty()) {
      orig.pop_back();
      repl.pop_back();
    }
    if (changed && !orig.empty()) hunks.push_back({join(orig), join(repl)});
    orig.clear();
    repl.clear();
    changed = false;
  };
  for (const auto& line : lines) {
    if (starts_with(line, "@@")) {
      flush();
      in_hunk = true;
      continue;
    }
    if (!in_hunk) continue;
    if (starts_with(line, "```") || is_file_header(line)) {
      flush();
      in_hunk = false;
      continue;
    }
    if (line.empty() || line[0] == ' ') {
      const auto ctx = line.empty() ? std::string() : line.substr(1);
      orig.push_back(ctx);
      repl.push_back(ctx);
    } else if (line[0] == '-') {
      orig.push_back(line.substr(1));
      changed = true;
    } else if (line[0] == '+') {
      repl.push_back(line.substr(1));
      changed = true;
    } else if (line[0] != '\\') {
      flush();
      in_hunk = false;
    }
  }
  flush();
  return hunks;
}

// Bare "---"/"+++" or "-"/"+" runs without @@ headers. A single-dash run
// only counts when a plus run follows, so Markdown bullet lists in prose
// are not mistaken for deletions.
std::vector<Hunk> parse_line_pairs(const std::vector<std::string>& lines) {
  std::vector<Hunk> hunks;
  std::vector<std::string> minus, plus;
  bool triple = false, all_spaced = true;
  auto flush = [&] {
    if (!minus.empty() && (!plus.empty() || triple)) {
      if (!triple && all_spaced) {
        for (auto* run : {&minus, &plus}) {
          for (auto& l : *run) l.erase(0, 1);
        }
      }
      hunks.push_back({join(minus), join(plus)});
    }
    minus.clear();
    plus.clear();
    triple = false;
    all_spaced = true;
  };
  for (const auto& line : lines) {
    if (is_file_header(line)) {
      flush();
      continue;
    }
    const bool is_triple = starts_with(line, "---") || starts_with(line, "+++");
    const char sign = line.empty() ? '\0' : line[0];
    if (sign != '-' && sign != '+') {
      flush();
      continue;
    }
    if (sign == '-' && !plus.empty()) flush();
    if (sign == '+' && minus.empty()) continue;  // pure insertion: nothing to anchor on
    std::string content = line.substr(is_triple ? 3 : 1);
    if (is_triple) {
      if (!content.empty() && content[0] == ' ') content.erase(0, 1);
      triple = true;
    } else if (content.empty() || content[0] != ' ') {
      all_spaced = false;
    }
    (sign == '-' ? minus : plus).push_back(std::move(content));
  }
  flush();
  return hunks;
}

std::vector<Hunk> parse_diff(const std::string& text) {
  const auto lines = diff_lines(text);
  for (const auto& line : lines) {
    if (starts_with(line, "@@")) return parse_unified(lines);
  }
  return parse_line_pairs(lines);
}

// ---- arrow -----------------------------------------------------------------

// Given the index of a closing ']', returns the index of its opening '['.
std::optional<std::size_t> open_bracket_before(const std::string& s, std::size_t close) {
  int depth = 0;
  for (std::size_t i = close + 1; i-- > 0;) {
    if (s[i] == ']') ++depth;
    if (s[i] == '[' && --depth == 0) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> close_bracket_after(const std::string& s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '[') ++depth;
    if (s[i] == ']' && --depth == 0) return i;
  }
  return std::nullopt;
}

std::vector<Hunk> parse_arrows(const std::string& text) {
  std::vector<Hunk> hunks;
  std::size_t from = 0;
  while (from < text.size()) {
    auto arrow = text.find("->", from);
    std::size_t arrow_len = 2;
    const auto unicode = text.find("\xE2\x86\x92", from);
    if (unicode != std::string::npos && (arrow == std::string::npos || unicode < arrow)) {
      arrow = unicode;
      arrow_len = 3;
    }
    if (arrow == std::string::npos) break;
    from = arrow + arrow_len;

    std::size_t l = arrow;
    while (l > 0 && std::isspace(static_cast<unsigned char>(text[l - 1]))) --l;
    std::size_t r = arrow + arrow_len;
    while (r < text.size() && std::isspace(static_cast<unsigned char>(text[r]))) ++r;
    if (l == 0 || text[l - 1] != ']' || r >= text.size() || text[r] != '[') continue;
    const auto lopen = open_bracket_before(text, l - 1);
    const auto rclose = close_bracket_after(text, r);
    if (!lopen || !rclose) continue;
    hunks.push_back({text.substr(*lopen + 1, l - 1 - *lopen - 1), text.substr(r + 1, *rclose - r - 1)});
    from = *rclose + 1;
  }
  return hunks;
}

void drop_unlocatable(std::vector<Hunk>& hunks) {
  std::erase_if(hunks, [](const Hunk& h) { return trim(h.original).empty(); });
}

// ---- whitespace-normalized search -------------------------------------------

struct Normalized {
  std::string text;
  std::vector<std::size_t> origin;  // text[i] came from input[origin[i]]
};

Normalized normalize_ws(std::string_view s) {
  Normalized n;
  bool in_space = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::isspace(static_cast<unsigned char>(s[i]))) {
      if (!in_space) {
        n.text += ' ';
        n.origin.push_back(i);
      }
      in_space = true;
    } else {
      n.text += s[i];
      n.origin.push_back(i);
      in_space = false;
    }
  }
  return n;
}

}  // namespace

EditProposal parse_edit(const std::string& text, const std::vector<EditType>& allowed,
                        const std::vector<EditType>& known_in) {
  const auto& known = known_in.empty() ? allowed : known_in;
  EditProposal out;
  out.raw = text;

  std::optional<std::string> action;
  if (auto j = parse_json_edit(text)) {
    out.hunks = std::move(j->hunks);
    out.format = EditFormat::exact_pair;
    action = j->action;
  }
  drop_unlocatable(out.hunks);
  if (out.hunks.empty()) {
    out.hunks = parse_diff(text);
    out.format = EditFormat::git_diff;
    drop_unlocatable(out.hunks);
  }
  if (out.hunks.empty()) {
    out.hunks = parse_arrows(text);
    out.format = EditFormat::arrow;
    drop_unlocatable(out.hunks);
  }
  if (out.hunks.empty()) throw EditParseError(EditParseError::Kind::no_hunk, "no applicable edit hunk found");

  if (!action) action = action_from_text(text, known);
  if (!action || clean_action(*action).empty()) {
    throw EditParseError(EditParseError::Kind::missing_action, "edit names no action");
  }
  const auto* type = lookup_action(*action, allowed);
  if (!type) {
    throw EditParseError(EditParseError::Kind::disallowed_action,
                         fmt::format("action '{}' is not allowed in this setting", clean_action(*action)));
  }
  out.selected_action = type->name;
  return out;
}

ApplyResult apply_edit(const std::string& body, const EditProposal& edit) {
  ApplyResult result;
  result.body = body;
  std::string work = body;
  for (std::size_t k = 0; k < edit.hunks.size(); ++k) {
    const auto& h = edit.hunks[k];
    AppliedHunk applied;
    std::size_t start = std::string::npos, end = 0;
    if (!h.original.empty()) {
      start = work.find(h.original);
      end = start + h.original.size();
    }
    if (start == std::string::npos) {
      const auto hay = normalize_ws(work);
      const auto needle = trim(normalize_ws(h.original).text);
      const auto pos = needle.empty() ? std::string::npos : hay.text.find(needle);
      if (pos != std::string::npos) {
        start = hay.origin[pos];
        end = hay.origin[pos + needle.size() - 1] + 1;
        applied.normalized = true;
      }
    }
    if (start == std::string::npos) {
      result.hunks.clear();
      result.failure_reason = fmt::format("hunk {}: original text not found", k + 1);
      return result;
    }
    work.replace(start, end - start, h.replacement);
    applied.offset = start;
    applied.old_length = end - start;
    applied.new_length = h.replacement.size();
    result.hunks.push_back(applied);
  }
  result.ok = true;
  result.body = std::move(work);
  return result;
}

}  // namespace review_arcade
