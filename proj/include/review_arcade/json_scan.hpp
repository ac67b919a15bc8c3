#pragma once

// Lenient extraction of JSON objects embedded in free-form model output.

#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace review_arcade {

// Lowercases and drops ' ', '_' and '-', so "Human Points" == "human_points".
std::string fold_key(std::string_view s);

// Member lookup under fold_key equality; nullptr when absent or not an object.
const nlohmann::json* find_key_folded(const nlohmann::json& obj, std::string_view key);

// Whole-string decimal number (surrounding whitespace allowed).
std::optional<double> parse_number(std::string_view s);

// A JSON number, or a string holding one.
std::optional<double> as_number(const nlohmann::json& v);

/// Scans `text` for balanced `{...}` spans (string-aware, so braces inside
/// JSON strings do not count), left to right, and returns the first that
/// parses as an object accepted by `accept`. Trailing commas are repaired.
/// `saw_object` reports whether any object parsed at all.
std::optional<nlohmann::json> find_json_object(std::string_view text,
                                               const std::function<bool(const nlohmann::json&)>& accept,
                                               bool* saw_object = nullptr);

}  // namespace review_arcade
