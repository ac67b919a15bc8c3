// review-arcade: run review, judge, ISI and reporting stages from a config.
//
// Exit codes: 0 success, 1 usage error, 2 partial failure (some cells
// failed or the run stopped early; rerun to resume), 3 fatal error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "review_arcade/error.hpp"
#include "review_arcade/experiment.hpp"
#include "review_arcade/report.hpp"

namespace ra = review_arcade;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitPartial = 2;
constexpr int kExitFatal = 3;

struct Args {
  std::string config;
  std::string backend;
  std::vector<std::string> prompts;
  std::vector<std::string> settings;
  std::optional<int> iterations;
  std::optional<int> runs;
  std::string out;
  std::string mock_script;
  bool one_sided = false;
  bool snap_scores = false;
  std::optional<std::size_t> max_cells;
  std::vector<std::string> formats;
};

ra::ExperimentConfig effective_config(const Args& a) {
  auto config = ra::load_config(a.config);
  ra::ConfigOverrides o;
  if (!a.backend.empty()) o.backend = a.backend;
  o.prompts = a.prompts;
  o.settings = a.settings;
  o.iterations = a.iterations;
  o.runs = a.runs;
  if (!a.out.empty()) o.out = a.out;
  if (!a.mock_script.empty()) o.mock_script = a.mock_script;
  o.one_sided = a.one_sided;
  o.snap_scores = a.snap_scores;
  ra::apply_overrides(config, o);
  return config;
}

int print_stage(const ra::StageReport& r) {
  fmt::print("{}: {} cell(s), {} new, {} skipped, {} failed{}\n", r.stage, r.total_cells, r.new_cells,
             r.skipped_cells, r.failed_cells, r.interrupted ? ", stopped early" : "");
  for (const auto& m : r.messages) fmt::print(stderr, "  {}\n", m);
  return r.partial() ? kExitPartial : kExitOk;
}

int run(const std::string& command, const Args& a) {
  ra::Experiment exp(effective_config(a));
  ra::RunOptions options;
  options.max_new_cells = a.max_cells;
  if (command == "review") return print_stage(exp.review(options));
  if (command == "judge") return print_stage(exp.judge(options));
  if (command == "isi") return print_stage(exp.isi(options));
  if (command == "evaluate") return print_stage(exp.evaluate());
  if (command == "summarize") {
    const int code = print_stage(exp.summarize());
    const auto& c = exp.corpus();
    std::size_t accepted = 0;
    for (const auto& s : c.submissions) accepted += s.split == ra::Split::Accepted;
    fmt::print("corpus: {} paper(s) ({} accepted, {} rejected), {} human review(s), {} load issue(s)\n",
               c.submissions.size(), accepted, c.submissions.size() - accepted, c.review_count(), c.issues.size());
    return code;
  }
  if (command == "report") {
    std::vector<ra::ReportFormat> formats;
    for (const auto& f : a.formats) formats.push_back(ra::parse_report_format(f));
    if (formats.empty()) formats.assign(std::begin(ra::kAllReportFormats), std::end(ra::kAllReportFormats));
    for (const auto& p : ra::write_report(exp.run_dir(), formats)) {
      fmt::print("{}\n", std::filesystem::relative(p, exp.run_dir()).generic_string());
    }
    return kExitOk;
  }
  throw ra::UsageError("unknown command " + command);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate, evaluate and stress-test LLM paper reviews."};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Args a;
  app.add_option("--config", a.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--backend", a.backend, "Use this backend for every stage");
  app.add_option("--prompt", a.prompts, "Review prompt(s) to run");
  app.add_option("--setting", a.settings, "ISI setting(s): baseline, constrained, default, adversarial");
  app.add_option("--iterations", a.iterations, "ISI iterations")->check(CLI::PositiveNumber);
  app.add_option("--runs", a.runs, "Reviews per paper and prompt")->check(CLI::PositiveNumber);
  app.add_option("--out", a.out, "Output root (run directory is <out>/<experiment>)");
  app.add_option("--mock-script", a.mock_script, "Replace every backend with a mock driven by this script")
      ->check(CLI::ExistingFile);
  app.add_flag("--one-sided", a.one_sided, "One-sided ISI tests (scores increase)");
  app.add_flag("--snap-scores", a.snap_scores, "Round review scores to the 0.5 grid");
  app.add_option("--max-cells", a.max_cells, "Stop after this many new cells; rerun to resume");

  std::string command;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"review", "Generate reviews for every backend x prompt x paper x run"},
           {"judge", "Ask the judge backend which human points each review captured"},
           {"isi", "Run iterative submission improvement for the configured settings"},
           {"evaluate", "Alignment, consistency and judge-recall results from stored reviews"},
           {"summarize", "Corpus statistics"},
           {"report", "Write CSV, JSON and plot-data reports from stored results"}}) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&command, name = name] { command = name; });
    if (name == "report") {
      sub->add_option("--format", a.formats, "csv, json and/or plotdata (default: all)");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return run(command, a);
  } catch (const ra::UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const ra::TransportError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitPartial;
  } catch (const std::exception& e) {
    fmt::print(stderr, "fatal: {}\n", e.what());
    return kExitFatal;
  }
}
