#pragma once

// Parsing editor output into hunks and applying them to a paper body.
//
// Three answer formats are recognised, tried in this order:
//   exact_pair  JSON with exact_original_text / new_text (optionally in an "edits" array)
//   git_diff    unified diff (@@ hunks) or bare ---/+++ or -/+ line pairs
//   arrow       [original] -> [new]

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "review_arcade/error.hpp"
#include "review_arcade/prompt_registry.hpp"

namespace review_arcade {

struct Hunk {
  std::string original;
  std::string replacement;

  friend bool operator==(const Hunk&, const Hunk&) = default;
};

enum class EditFormat { git_diff, arrow, exact_pair };
std::string_view to_string(EditFormat f);

struct EditProposal {
  std::string selected_action;
  std::vector<Hunk> hunks;
  EditFormat format = EditFormat::git_diff;
  std::string raw;
};

class EditParseError : public ParseError {
 public:
  enum class Kind { no_hunk, missing_action, disallowed_action };
  EditParseError(Kind kind, const std::string& message) : ParseError(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Parses one editor answer. The action comes from a "selected_action"
/// field or the first bracketed name (e.g. "[Clarification]") matching
/// a type in `known`; names compare case-, space- and hyphen-insensitively.
/// `known` defaults to `allowed`. Throws EditParseError when no hunk with
/// non-empty original text is found, no action is named, or the action is
/// not in `allowed`.
EditProposal parse_edit(const std::string& text, const std::vector<EditType>& allowed,
                        const std::vector<EditType>& known = {});

struct AppliedHunk {
  std::size_t offset = 0;       // where the replaced text started
  std::size_t old_length = 0;   // bytes removed
  std::size_t new_length = 0;   // bytes inserted
  bool normalized = false;      // located via whitespace-collapsed matching
};

struct ApplyResult {
  bool ok = false;
  std::string body;  // edited body, or the input unchanged on failure
  std::vector<AppliedHunk> hunks;
  std::string failure_reason;
};

/// Applies hunks in order, each to the first occurrence of its original
/// text: exact substring match first, then a match with whitespace runs
/// collapsed on both sides. All-or-nothing: if any hunk cannot be located
/// the body is returned unchanged. Offsets refer to the body as it was
/// when that hunk was applied.
ApplyResult apply_edit(const std::string& body, const EditProposal& edit);

}  // namespace review_arcade
