#include "review_arcade/json_scan.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include "review_arcade/util.hpp"

namespace review_arcade {

using nlohmann::json;

std::string fold_key(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' || c == '_' || c == '-') continue;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

const json* find_key_folded(const json& obj, std::string_view key) {
  if (!obj.is_object()) return nullptr;
  const auto folded = fold_key(key);
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (fold_key(it.key()) == folded) return &it.value();
  }
  return nullptr;
}

std::optional<double> parse_number(std::string_view s) {
  const auto t = trim(s);
  if (t.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<double> as_number(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return parse_number(v.get<std::string>());
  return std::nullopt;
}

namespace {

// Removes commas that directly precede a closing bracket, outside strings.
std::string drop_trailing_commas(std::string_view s) {
  std::string out;
  bool in_str = false, esc = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      out += c;
      if (esc) {
        esc = false;
      } else if (c == '\\') {
        esc = true;
      } else if (c == '"') {
        in_str = false;
      }
      continue;
    }
    if (c == '"') in_str = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && (s[j] == '}' || s[j] == ']')) continue;
    }
    out += c;
  }
  return out;
}

// End (exclusive) of the balanced object starting at `open`, or npos.
std::size_t match_object(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_str = false, esc = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      if (esc) {
        esc = false;
      } else if (c == '\\') {
        esc = true;
      } else if (c == '"') {
        in_str = false;
      }
      continue;
    }
    if (c == '"') {
      in_str = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<json> parse_candidate(std::string_view text) {
  auto doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) doc = json::parse(drop_trailing_commas(text), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  return doc;
}

}  // namespace

std::optional<json> find_json_object(std::string_view text, const std::function<bool(const json&)>& accept,
                                     bool* saw_object) {
  if (saw_object) *saw_object = false;
  for (auto open = text.find('{'); open != std::string_view::npos; open = text.find('{', open + 1)) {
    const auto close = match_object(text, open);
    if (close == std::string_view::npos) continue;
    auto doc = parse_candidate(text.substr(open, close - open));
    if (!doc) continue;
    if (saw_object) *saw_object = true;
    if (accept(*doc)) return doc;
  }
  return std::nullopt;
}

}  // namespace review_arcade
