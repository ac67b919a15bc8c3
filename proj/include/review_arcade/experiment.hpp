#pragma once

// Experiment configuration, run directories and the pipeline stages behind
// the CLI subcommands.
//
// Config file (JSON). Relative paths resolve against the config file's
// directory. API keys are never read from here; see api_key_env_var().
//
//   {
//     "experiment": "demo",
//     "corpus": "corpus",
//     "max_tokens": 8000,                 // optional length filter
//     "token_counter": {"mode": "whitespace" | "subword_approx", "multiplier": 1.3},
//     "drop_reviewless": false,
//     "backends": {
//       "mock": {"kind": "mock", "mock_script": "script.json", "model_name": "mock-model"},
//       "local": {"kind": "http", "endpoint": "http://localhost:8000/v1", "model_name": "m",
//                 "temperature": 1.0, "max_tokens": 4096, "max_retries": 3, "timeout_s": 120,
//                 "max_in_flight": 4, "backoff_ms": 1000}
//     },
//     "review": {"backends": ["mock"], "prompts": ["simple", "default"], "runs": 3,
//                "snap_scores": false, "parse_retries": 2},
//     "judge":  {"backend": "mock", "prompts": [], "run_index": 0},
//     "isi":    {"review_backend": "mock", "edit_backend": "mock", "settings": ["baseline", "default"],
//                "iterations": 10, "review_prompt": "default", "endpoint_runs": 1},
//     "metrics": {"one_sided": false, "baseline_constant": 2.5},
//     "prompts_dir": "",  "taxonomy": "",   // empty: bundled files
//     "output_dir": "runs",
//     "workers": 4,
//     "seed": 0
//   }

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "review_arcade/corpus.hpp"
#include "review_arcade/model_gateway.hpp"
#include "review_arcade/prompt_registry.hpp"

namespace review_arcade {

struct BackendEntry {
  BackendConfig config;
  std::filesystem::path mock_script;  // mock only
};

struct ExperimentConfig {
  std::string experiment = "experiment";
  std::filesystem::path base_dir;  // where relative paths resolve
  std::filesystem::path corpus = "corpus";
  std::optional<std::size_t> max_tokens;
  TokenCounter token_counter;
  bool drop_reviewless = false;
  std::map<std::string, BackendEntry> backends;

  struct Review {
    std::vector<std::string> backends;
    std::vector<std::string> prompts;
    int runs = 3;
    bool snap_scores = false;
    int parse_retries = 2;
  } review;

  struct Judge {
    std::string backend;
    std::vector<std::string> prompts;  // empty: all review prompts
    int run_index = 0;
  } judge;

  struct Isi {
    std::string review_backend;
    std::string edit_backend;
    std::vector<IsiSetting> settings;
    int iterations = 10;
    std::string review_prompt = "default";
    int endpoint_runs = 1;
  } isi;

  struct Metrics {
    bool one_sided = false;
    double baseline_constant = 2.5;
  } metrics;

  std::filesystem::path prompts_dir;
  std::filesystem::path taxonomy;
  std::filesystem::path output_dir = "runs";
  std::size_t workers = 4;
  std::uint64_t seed = 0;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path run_dir() const { return resolve(output_dir) / experiment; }
  const std::vector<std::string>& judge_prompts() const {
    return judge.prompts.empty() ? review.prompts : judge.prompts;
  }
};

/// Parses a config document. Unknown keys and anything that looks like a
/// credential are rejected with UsageError.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

struct ConfigOverrides {
  std::optional<std::string> backend;
  std::vector<std::string> prompts;
  std::vector<std::string> settings;
  std::optional<int> iterations;
  std::optional<int> runs;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> mock_script;
  bool one_sided = false;
  bool snap_scores = false;
};

// --backend selects the backend for every stage; --mock-script turns every
// backend into a mock reading that script.
void apply_overrides(ExperimentConfig& config, const ConfigOverrides& o);

/// Checks references between sections against the prompt registry. Throws
/// UsageError.
void validate_config(const ExperimentConfig& config, const PromptRegistry& registry);

/// Canonical JSON of everything that determines results: output_dir and
/// workers are left out, mock scripts and prompt files enter by content
/// hash.
nlohmann::json canonical_config(const ExperimentConfig& config, const PromptRegistry& registry);
std::string config_hash(const ExperimentConfig& config, const PromptRegistry& registry);

struct StageReport {
  std::string stage;
  std::size_t total_cells = 0;
  std::size_t new_cells = 0;
  std::size_t skipped_cells = 0;
  std::size_t failed_cells = 0;
  bool interrupted = false;
  std::vector<std::string> messages;

  bool partial() const { return failed_cells > 0 || interrupted; }
};

struct RunOptions {
  // Stop after this many newly computed cells (simulates an interruption).
  std::optional<std::size_t> max_new_cells;
};

/// A resolved experiment: registry, filtered corpus, live backends and the
/// run directory with its manifest. Opening a run directory whose manifest
/// carries a different config hash throws UsageError.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  const PromptRegistry& registry() const { return registry_; }
  const Corpus& corpus() const { return corpus_; }
  const std::filesystem::path& run_dir() const { return run_dir_; }
  const std::string& hash() const { return hash_; }
  const BackendConfig& backend(const std::string& name) const;

  StageReport review(const RunOptions& options = {});
  StageReport judge(const RunOptions& options = {});
  StageReport isi(const RunOptions& options = {});
  StageReport evaluate();
  StageReport summarize();

  std::filesystem::path review_journal_path(const std::string& backend, const std::string& prompt) const;
  std::filesystem::path judge_journal_path(const std::string& backend, const std::string& prompt) const;
  std::filesystem::path trajectory_dir(IsiSetting setting, const std::string& paper_id) const;

 private:
  void record_stage(const StageReport& report, const std::vector<std::filesystem::path>& artifacts);

  ExperimentConfig config_;
  PromptRegistry registry_;
  Corpus corpus_;
  std::size_t n_filtered_out_ = 0;
  std::map<std::string, BackendConfig> backends_;
  std::filesystem::path run_dir_;
  std::string hash_;
};

inline constexpr const char* kEvaluationResult = "results/evaluation.json";
inline constexpr const char* kIsiResult = "results/isi.json";
inline constexpr const char* kCorpusResult = "results/corpus_summary.json";

}  // namespace review_arcade
