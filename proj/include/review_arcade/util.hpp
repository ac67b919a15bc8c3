#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace review_arcade {

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);

// Writes via a sibling temporary file and rename, so readers never observe
// a half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Splits on '\n'; a trailing newline does not produce an empty last element.
std::vector<std::string> split_lines(std::string_view text);

std::string trim(std::string_view s);

// Restricts a name to [A-Za-z0-9._-] so it is safe as a path component.
std::string sanitize_component(std::string_view name);

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads. The first
/// exception thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace review_arcade
