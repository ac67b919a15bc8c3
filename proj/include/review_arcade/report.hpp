#pragma once

// Report emission from a run directory's results/*.json. Output is
// byte-stable: fixed row order and fixed decimals (2 for MAE, percentages
// and mean scores; 3 for r, t, p and d). Undefined values print as "n/a".

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace review_arcade {

enum class ReportFormat { csv, json, plotdata };
std::string_view to_string(ReportFormat f);
ReportFormat parse_report_format(std::string_view s);  // throws UsageError
inline constexpr ReportFormat kAllReportFormats[] = {ReportFormat::csv, ReportFormat::json, ReportFormat::plotdata};

/// Writes the requested formats under <run_dir>/report and returns the
/// files written, in a fixed order. Throws UsageError naming every missing
/// prerequisite when a stage's results are absent.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& run_dir,
                                                const std::vector<ReportFormat>& formats);

// Shared number formatting: fixed decimals, "n/a" for NaN, no negative zero.
std::string format_fixed(double v, int decimals);

}  // namespace review_arcade
