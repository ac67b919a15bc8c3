#include "review_arcade/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <set>

#include <fmt/format.h>

#include "review_arcade/alignment.hpp"
#include "review_arcade/isi_engine.hpp"
#include "review_arcade/json_scan.hpp"
#include "review_arcade/review_engine.hpp"
#include "review_arcade/util.hpp"

namespace review_arcade {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string dump(const json& j, int indent = 2) {
  return j.dump(indent, ' ', false, json::error_handler_t::replace) + "\n";
}

bool looks_like_credential(std::string_view key) {
  const auto k = fold_key(key);
  for (std::string_view bad : {"apikey", "secret", "password", "accesstoken", "authorization", "bearer"}) {
    if (k.find(bad) != std::string::npos) return true;
  }
  return k == "key" || k == "token";
}

void check_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw UsageError(fmt::format("config: {} must be an object", where));
  for (const auto& [k, v] : obj.items()) {
    if (looks_like_credential(k)) {
      throw UsageError(fmt::format(
          "config: {}.{}: credentials are never read from config files; set REVIEW_ARCADE_API_KEY "
          "or REVIEW_ARCADE_API_KEY_<BACKEND> in the environment",
          where, k));
    }
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw UsageError(fmt::format("config: unknown key {}.{}", where, k));
    }
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, std::string_view where) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw UsageError(fmt::format("config: {}.{} has the wrong type", where, key));
  }
}

fs::path path_or(const json& obj, const char* key, fs::path fallback, std::string_view where) {
  return fs::path(get_or<std::string>(obj, key, fallback.string(), where));
}

std::vector<IsiSetting> parse_settings(const std::vector<std::string>& names) {
  std::vector<IsiSetting> out;
  for (const auto& n : names) {
    const auto s = parse_setting(n);
    if (!s) throw UsageError(fmt::format("unknown ISI setting '{}'", n));
    if (std::find(out.begin(), out.end(), *s) == out.end()) out.push_back(*s);
  }
  return out;
}

BackendEntry parse_backend(const std::string& name, const json& j) {
  const std::string where = "backends." + name;
  check_keys(j, where,
             {"kind", "mock_script", "endpoint", "model_name", "temperature", "max_tokens", "max_retries", "timeout_s",
              "max_in_flight", "backoff_ms"});
  BackendEntry e;
  auto& c = e.config;
  c.name = name;
  const auto kind = get_or<std::string>(j, "kind", "", where);
  if (kind == "mock") {
    c.kind = BackendConfig::Kind::mock;
    c.backoff_base = std::chrono::milliseconds(0);
  } else if (kind == "http") {
    c.kind = BackendConfig::Kind::http;
  } else {
    throw UsageError(fmt::format("config: {}.kind must be \"mock\" or \"http\"", where));
  }
  e.mock_script = path_or(j, "mock_script", "", where);
  c.endpoint = get_or<std::string>(j, "endpoint", "", where);
  c.model_name = get_or<std::string>(j, "model_name", c.kind == BackendConfig::Kind::mock ? "mock-model" : "", where);
  c.temperature = get_or<double>(j, "temperature", c.temperature, where);
  c.max_tokens = get_or<int>(j, "max_tokens", c.max_tokens, where);
  c.max_retries = get_or<int>(j, "max_retries", c.max_retries, where);
  c.timeout = std::chrono::milliseconds(
      static_cast<long long>(get_or<double>(j, "timeout_s", c.timeout.count() / 1000.0, where) * 1000.0));
  c.max_in_flight = get_or<std::size_t>(j, "max_in_flight", c.max_in_flight, where);
  c.backoff_base = std::chrono::milliseconds(get_or<long long>(j, "backoff_ms", c.backoff_base.count(), where));
  if (c.kind == BackendConfig::Kind::mock && e.mock_script.empty()) {
    throw UsageError(fmt::format("config: {} is a mock backend without mock_script", where));
  }
  if (c.kind == BackendConfig::Kind::http && c.model_name.empty()) {
    throw UsageError(fmt::format("config: {} needs a model_name", where));
  }
  return e;
}

}  // namespace

fs::path ExperimentConfig::resolve(const fs::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
  check_keys(j, "config",
             {"experiment", "corpus", "max_tokens", "token_counter", "drop_reviewless", "backends", "review", "judge",
              "isi", "metrics", "prompts_dir", "taxonomy", "output_dir", "workers", "seed"});
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.experiment = get_or<std::string>(j, "experiment", c.experiment, "config");
  if (c.experiment.empty() || sanitize_component(c.experiment) != c.experiment) {
    throw UsageError("config: experiment must be a plain name ([A-Za-z0-9._-])");
  }
  c.corpus = path_or(j, "corpus", c.corpus, "config");
  if (j.contains("max_tokens") && !j["max_tokens"].is_null()) {
    c.max_tokens = get_or<std::size_t>(j, "max_tokens", 0, "config");
  }
  if (j.contains("token_counter")) {
    const auto& tc = j["token_counter"];
    check_keys(tc, "token_counter", {"mode", "multiplier"});
    const auto mode = get_or<std::string>(tc, "mode", "whitespace", "token_counter");
    if (mode == "whitespace") {
      c.token_counter.mode = TokenCounter::Mode::whitespace;
    } else if (mode == "subword_approx") {
      c.token_counter.mode = TokenCounter::Mode::subword_approx;
    } else {
      throw UsageError("config: token_counter.mode must be whitespace or subword_approx");
    }
    c.token_counter.multiplier = get_or<double>(tc, "multiplier", c.token_counter.multiplier, "token_counter");
  }
  c.drop_reviewless = get_or<bool>(j, "drop_reviewless", false, "config");

  if (j.contains("backends")) {
    if (!j["backends"].is_object()) throw UsageError("config: backends must be an object");
    for (const auto& [name, b] : j["backends"].items()) c.backends.emplace(name, parse_backend(name, b));
  }
  const std::string first_backend = c.backends.empty() ? "" : c.backends.begin()->first;

  const json empty = json::object();
  const auto& r = j.contains("review") ? j["review"] : empty;
  check_keys(r, "review", {"backends", "prompts", "runs", "snap_scores", "parse_retries"});
  c.review.backends = get_or<std::vector<std::string>>(
      r, "backends", first_backend.empty() ? std::vector<std::string>{} : std::vector<std::string>{first_backend},
      "review");
  c.review.prompts = get_or<std::vector<std::string>>(r, "prompts", {}, "review");
  c.review.runs = get_or<int>(r, "runs", c.review.runs, "review");
  c.review.snap_scores = get_or<bool>(r, "snap_scores", false, "review");
  c.review.parse_retries = get_or<int>(r, "parse_retries", c.review.parse_retries, "review");

  const auto& jd = j.contains("judge") ? j["judge"] : empty;
  check_keys(jd, "judge", {"backend", "prompts", "run_index"});
  c.judge.backend = get_or<std::string>(jd, "backend", first_backend, "judge");
  c.judge.prompts = get_or<std::vector<std::string>>(jd, "prompts", {}, "judge");
  c.judge.run_index = get_or<int>(jd, "run_index", 0, "judge");

  const auto& is = j.contains("isi") ? j["isi"] : empty;
  check_keys(is, "isi", {"review_backend", "edit_backend", "settings", "iterations", "review_prompt", "endpoint_runs"});
  c.isi.review_backend = get_or<std::string>(is, "review_backend", first_backend, "isi");
  c.isi.edit_backend = get_or<std::string>(is, "edit_backend", c.isi.review_backend, "isi");
  c.isi.settings = parse_settings(get_or<std::vector<std::string>>(is, "settings", {}, "isi"));
  c.isi.iterations = get_or<int>(is, "iterations", c.isi.iterations, "isi");
  c.isi.review_prompt = get_or<std::string>(is, "review_prompt", c.isi.review_prompt, "isi");
  c.isi.endpoint_runs = get_or<int>(is, "endpoint_runs", 1, "isi");

  const auto& m = j.contains("metrics") ? j["metrics"] : empty;
  check_keys(m, "metrics", {"one_sided", "baseline_constant"});
  c.metrics.one_sided = get_or<bool>(m, "one_sided", false, "metrics");
  c.metrics.baseline_constant = get_or<double>(m, "baseline_constant", 2.5, "metrics");

  c.prompts_dir = path_or(j, "prompts_dir", "", "config");
  c.taxonomy = path_or(j, "taxonomy", "", "config");
  c.output_dir = path_or(j, "output_dir", c.output_dir, "config");
  c.workers = get_or<std::size_t>(j, "workers", c.workers, "config");
  c.seed = get_or<std::uint64_t>(j, "seed", 0, "config");
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path), nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw UsageError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return parse_config(j, fs::absolute(path).parent_path());
}

void apply_overrides(ExperimentConfig& c, const ConfigOverrides& o) {
  if (o.mock_script) {
    const auto script = fs::absolute(*o.mock_script);
    for (auto& [name, e] : c.backends) {
      e.config.kind = BackendConfig::Kind::mock;
      e.config.endpoint.clear();
      e.config.backoff_base = std::chrono::milliseconds(0);
      e.mock_script = script;
    }
    if (c.backends.empty()) {
      BackendEntry e;
      e.config.name = "mock";
      e.config.backoff_base = std::chrono::milliseconds(0);
      e.mock_script = script;
      c.backends.emplace("mock", e);
    }
  }
  if (o.backend) {
    c.review.backends = {*o.backend};
    c.judge.backend = *o.backend;
    c.isi.review_backend = *o.backend;
    c.isi.edit_backend = *o.backend;
  } else if (o.mock_script && c.backends.size() == 1) {
    const auto& only = c.backends.begin()->first;
    if (c.review.backends.empty()) c.review.backends = {only};
    if (c.judge.backend.empty()) c.judge.backend = only;
    if (c.isi.review_backend.empty()) c.isi.review_backend = only;
    if (c.isi.edit_backend.empty()) c.isi.edit_backend = only;
  }
  if (!o.prompts.empty()) c.review.prompts = o.prompts;
  if (!o.settings.empty()) c.isi.settings = parse_settings(o.settings);
  if (o.iterations) c.isi.iterations = *o.iterations;
  if (o.runs) c.review.runs = *o.runs;
  if (o.out) c.output_dir = fs::absolute(*o.out);
  if (o.one_sided) c.metrics.one_sided = true;
  if (o.snap_scores) c.review.snap_scores = true;
}

void validate_config(const ExperimentConfig& c, const PromptRegistry& registry) {
  auto need_backend = [&](const std::string& name, std::string_view role) {
    if (!c.backends.contains(name)) throw UsageError(fmt::format("config: {} refers to unknown backend '{}'", role, name));
  };
  for (const auto& b : c.review.backends) need_backend(b, "review.backends");
  if (c.review.runs < 1) throw UsageError("config: review.runs must be >= 1");
  if (c.review.parse_retries < 0) throw UsageError("config: review.parse_retries must be >= 0");
  std::set<std::string> seen;
  for (const auto& p : c.review.prompts) {
    if (!registry.has_prompt(p) || registry.get_prompt(p).kind != PromptKind::review) {
      throw UsageError(fmt::format("config: '{}' is not a known review prompt", p));
    }
    if (!seen.insert(p).second) throw UsageError(fmt::format("config: review prompt '{}' listed twice", p));
  }
  for (const auto& p : c.judge.prompts) {
    if (std::find(c.review.prompts.begin(), c.review.prompts.end(), p) == c.review.prompts.end()) {
      throw UsageError(fmt::format("config: judge prompt '{}' is not among review.prompts", p));
    }
  }
  if (!c.judge.backend.empty()) need_backend(c.judge.backend, "judge.backend");
  if (c.judge.run_index < 0 || c.judge.run_index >= c.review.runs) {
    throw UsageError("config: judge.run_index must name an existing review run");
  }
  if (!c.isi.settings.empty()) {
    need_backend(c.isi.review_backend, "isi.review_backend");
    need_backend(c.isi.edit_backend, "isi.edit_backend");
    if (c.isi.iterations < 1) throw UsageError("config: isi.iterations must be >= 1");
    if (c.isi.endpoint_runs < 1) throw UsageError("config: isi.endpoint_runs must be >= 1");
    if (!registry.has_prompt(c.isi.review_prompt) ||
        registry.get_prompt(c.isi.review_prompt).kind != PromptKind::review) {
      throw UsageError(fmt::format("config: isi.review_prompt '{}' is not a review prompt", c.isi.review_prompt));
    }
    for (auto s : c.isi.settings) {
      if (s != IsiSetting::baseline) registry.edit_prompt(s);
    }
  }
  if (c.max_tokens && *c.max_tokens == 0) throw UsageError("config: max_tokens must be positive");
  if (c.workers == 0) throw UsageError("config: workers must be >= 1");
  for (const auto& [name, e] : c.backends) {
    if (e.config.kind == BackendConfig::Kind::http && e.config.endpoint.empty()) {
      throw UsageError(fmt::format("config: backend {} needs an endpoint", name));
    }
  }
}

json canonical_config(const ExperimentConfig& c, const PromptRegistry& registry) {
  json backends = json::object();
  for (const auto& [name, e] : c.backends) {
    const auto& b = e.config;
    json jb = {{"kind", b.kind == BackendConfig::Kind::mock ? "mock" : "http"},
               {"model_name", b.model_name},
               {"temperature", b.temperature},
               {"max_tokens", b.max_tokens},
               {"max_retries", b.max_retries},
               {"timeout_ms", b.timeout.count()},
               {"max_in_flight", b.max_in_flight},
               {"backoff_ms", b.backoff_base.count()}};
    if (b.kind == BackendConfig::Kind::mock) {
      jb["mock_script_sha256"] = sha256_hex(read_file(c.resolve(e.mock_script)));
    } else {
      jb["endpoint"] = b.endpoint;
    }
    backends[name] = jb;
  }
  json settings = json::array();
  for (auto s : c.isi.settings) settings.push_back(to_string(s));
  return {{"experiment", c.experiment},
          {"corpus", c.corpus.generic_string()},
          {"max_tokens", c.max_tokens ? json(*c.max_tokens) : json(nullptr)},
          {"token_counter",
           {{"mode", c.token_counter.mode == TokenCounter::Mode::whitespace ? "whitespace" : "subword_approx"},
            {"multiplier", c.token_counter.multiplier}}},
          {"drop_reviewless", c.drop_reviewless},
          {"backends", backends},
          {"review",
           {{"backends", c.review.backends},
            {"prompts", c.review.prompts},
            {"runs", c.review.runs},
            {"snap_scores", c.review.snap_scores},
            {"parse_retries", c.review.parse_retries}}},
          {"judge", {{"backend", c.judge.backend}, {"prompts", c.judge_prompts()}, {"run_index", c.judge.run_index}}},
          {"isi",
           {{"review_backend", c.isi.review_backend},
            {"edit_backend", c.isi.edit_backend},
            {"settings", settings},
            {"iterations", c.isi.iterations},
            {"review_prompt", c.isi.review_prompt},
            {"endpoint_runs", c.isi.endpoint_runs}}},
          {"metrics", {{"one_sided", c.metrics.one_sided}, {"baseline_constant", c.metrics.baseline_constant}}},
          {"prompt_files", registry.file_hashes()},
          {"seed", c.seed}};
}

std::string config_hash(const ExperimentConfig& c, const PromptRegistry& registry) {
  return sha256_hex(canonical_config(c, registry).dump());
}

// ---- judge journal -------------------------------------------------------------

namespace {

json verdict_to_json(const std::string& paper_id, int human_index, const JudgeVerdict& v) {
  json j = {{"paper_id", paper_id},
            {"human_index", human_index},
            {"valid", v.valid},
            {"human_strength_points", v.human_strength_points},
            {"human_weakness_points", v.human_weakness_points},
            {"captured_strengths", v.captured_strengths},
            {"captured_weaknesses", v.captured_weaknesses},
            {"attempts", v.attempts},
            {"raw_text", v.raw_text}};
  if (!v.failure_reason.empty()) j["failure_reason"] = v.failure_reason;
  return j;
}

JudgeVerdict verdict_from_json(const json& j) {
  JudgeVerdict v;
  v.valid = j.at("valid").get<bool>();
  v.human_strength_points = j.at("human_strength_points").get<int>();
  v.human_weakness_points = j.at("human_weakness_points").get<int>();
  v.captured_strengths = j.at("captured_strengths").get<int>();
  v.captured_weaknesses = j.at("captured_weaknesses").get<int>();
  v.attempts = j.at("attempts").get<int>();
  v.raw_text = j.at("raw_text").get<std::string>();
  v.failure_reason = j.value("failure_reason", "");
  return v;
}

// Line-delimited verdicts keyed by (paper, human review index); same
// journal/finalize contract as ReviewJournal.
class JudgeJournal {
 public:
  explicit JudgeJournal(fs::path path) : path_(std::move(path)) {
    if (!fs::exists(path_)) return;
    bool torn = false;
    const auto text = read_file(path_);
    for (const auto& line : split_lines(text)) {
      if (trim(line).empty()) continue;
      try {
        const auto j = json::parse(line);
        records_[{j.at("paper_id").get<std::string>(), j.at("human_index").get<int>()}] = j;
      } catch (const json::exception&) {
        torn = true;
      }
    }
    if (torn || (!text.empty() && text.back() != '\n')) finalize();
  }

  bool contains(const std::string& paper, int h) const {
    std::lock_guard lock(mu_);
    return records_.contains({paper, h});
  }

  void append(const json& record) {
    std::lock_guard lock(mu_);
    records_[{record.at("paper_id").get<std::string>(), record.at("human_index").get<int>()}] = record;
    fs::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << dump(record, -1);
    out.flush();
    if (!out) throw Error("cannot append to " + path_.string());
  }

  void finalize() {
    std::lock_guard lock(mu_);
    std::string text;
    for (const auto& [k, r] : records_) text += dump(r, -1);
    fs::create_directories(path_.parent_path());
    write_file_atomic(path_, text);
  }

  std::vector<JudgeVerdict> verdicts() const {
    std::lock_guard lock(mu_);
    std::vector<JudgeVerdict> out;
    for (const auto& [k, r] : records_) out.push_back(verdict_from_json(r));
    return out;
  }

 private:
  fs::path path_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, int>, json> records_;
};

// Counts cells, skips finished ones and enforces the new-cell budget.
struct CellRunner {
  StageReport& report;
  const RunOptions& options;
  std::atomic<std::size_t> started{0};
  std::atomic<std::size_t> skipped{0};
  std::atomic<std::size_t> failed{0};
  std::atomic<bool> interrupted{false};
  std::mutex mu;
  std::vector<std::string> messages;

  CellRunner(StageReport& r, const RunOptions& o) : report(r), options(o) {}

  // False when the cell must not run because the budget is spent.
  bool claim() {
    if (options.max_new_cells && started.fetch_add(1) >= *options.max_new_cells) {
      interrupted = true;
      return false;
    }
    if (!options.max_new_cells) started.fetch_add(1);
    return true;
  }

  void fail(const std::string& what) {
    ++failed;
    note(what);
  }

  void note(const std::string& what) {
    std::lock_guard lock(mu);
    messages.push_back(what);
  }

  void finish(std::size_t total) {
    report.total_cells = total;
    report.skipped_cells = skipped;
    report.failed_cells = failed;
    report.interrupted = interrupted;
    const std::size_t s = started;
    report.new_cells = options.max_new_cells ? std::min(s, *options.max_new_cells) - failed : s - failed;
    std::sort(messages.begin(), messages.end());
    report.messages = std::move(messages);
  }
};

json mean_std_json(const MeanStd& m) {
  if (!m.defined()) return {{"mean", nullptr}, {"std", nullptr}, {"n", 0}};
  return {{"mean", m.mean}, {"std", m.std}, {"n", m.n}};
}

json alignment_json(const PromptAlignment& a, std::string_view kind, const std::string& label) {
  json cells = json::object();
  for (const auto& [scope, cell] : a.cells) {
    cells[std::string(to_string(scope))] = {{"mae", mean_std_json(cell.mae)},
                                            {"r", mean_std_json(cell.r)},
                                            {"n_papers", cell.n_papers},
                                            {"n_excluded", cell.n_excluded},
                                            {"r_clamped", cell.r_clamped}};
  }
  return {{"model", a.model}, {"prompt", label}, {"kind", kind}, {"cells", cells}};
}

json stats_json(const std::optional<PairedStats>& s) {
  if (!s) return nullptr;
  auto num = [](double v) -> json {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
  };
  return {{"t", num(s->result.t)},
          {"df", s->result.df},
          {"p", num(s->result.p)},
          {"d", num(s->result.d)},
          {"n", s->result.n},
          {"degenerate", s->degenerate}};
}

}  // namespace

// ---- Experiment ----------------------------------------------------------------

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
  if (config_.prompts_dir.empty() && config_.taxonomy.empty()) {
    registry_ = PromptRegistry::load_bundled();
  } else {
    registry_ = PromptRegistry::load(
        config_.prompts_dir.empty() ? PromptRegistry::bundled_prompt_dir() : config_.resolve(config_.prompts_dir),
        config_.taxonomy.empty() ? PromptRegistry::bundled_taxonomy_file() : config_.resolve(config_.taxonomy));
  }
  validate_config(config_, registry_);

  LoadOptions lo;
  lo.counter = config_.token_counter;
  Corpus full = load_corpus(config_.resolve(config_.corpus), lo);
  if (config_.max_tokens || config_.drop_reviewless) {
    corpus_ = filter_papers(full, config_.max_tokens.value_or(std::numeric_limits<std::size_t>::max()),
                            config_.drop_reviewless);
    n_filtered_out_ = full.submissions.size() - corpus_.submissions.size();
  } else {
    corpus_ = std::move(full);
  }
  std::sort(corpus_.submissions.begin(), corpus_.submissions.end(),
            [](const Submission& a, const Submission& b) { return a.id < b.id; });

  for (const auto& [name, e] : config_.backends) {
    BackendConfig b = e.config;
    if (b.kind == BackendConfig::Kind::mock) {
      b.mock = std::make_shared<MockBackend>(load_mock_script(config_.resolve(e.mock_script)));
    }
    b.validate();
    backends_.emplace(name, std::move(b));
  }

  hash_ = config_hash(config_, registry_);
  run_dir_ = config_.run_dir();
  fs::create_directories(run_dir_);
  const auto manifest_path = run_dir_ / "manifest.json";
  if (fs::exists(manifest_path)) {
    json m;
    try {
      m = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
      throw UsageError(fmt::format("{}: unreadable manifest: {}", manifest_path.string(), e.what()));
    }
    const auto stored = m.value("config_hash", "");
    if (stored != hash_) {
      throw UsageError(fmt::format(
          "{} was produced by a different configuration (hash {} vs {}); choose another --out or experiment name",
          run_dir_.string(), stored.substr(0, 12), hash_.substr(0, 12)));
    }
  } else {
    json m = {{"experiment", config_.experiment},
              {"config_hash", hash_},
              {"config", canonical_config(config_, registry_)},
              {"stages", json::object()},
              {"artifacts", json::array()}};
    write_file_atomic(manifest_path, dump(m));
  }
}

const BackendConfig& Experiment::backend(const std::string& name) const {
  const auto it = backends_.find(name);
  if (it == backends_.end()) throw UsageError(fmt::format("unknown backend '{}'", name));
  return it->second;
}

fs::path Experiment::review_journal_path(const std::string& backend, const std::string& prompt) const {
  return run_dir_ / "reviews" / sanitize_component(backend) / (sanitize_component(prompt) + ".jsonl");
}

fs::path Experiment::judge_journal_path(const std::string& backend, const std::string& prompt) const {
  return run_dir_ / "judge" / sanitize_component(backend) / (sanitize_component(prompt) + ".jsonl");
}

fs::path Experiment::trajectory_dir(IsiSetting setting, const std::string& paper_id) const {
  return run_dir_ / "isi" / std::string(to_string(setting)) / sanitize_component(paper_id);
}

void Experiment::record_stage(const StageReport& report, const std::vector<fs::path>& artifacts) {
  const auto manifest_path = run_dir_ / "manifest.json";
  json m = json::parse(read_file(manifest_path));
  m["stages"][report.stage] = {{"complete", !report.partial()},
                               {"cells", report.total_cells},
                               {"failed", report.failed_cells}};
  std::set<std::string> all;
  for (const auto& a : m["artifacts"]) all.insert(a.get<std::string>());
  for (const auto& a : artifacts) all.insert(fs::relative(a, run_dir_).generic_string());
  m["artifacts"] = all;
  write_file_atomic(manifest_path, dump(m));
}

StageReport Experiment::review(const RunOptions& options) {
  StageReport report;
  report.stage = "review";
  struct Cell {
    const std::string* backend;
    const std::string* prompt;
    const Submission* paper;
    int run;
    ReviewJournal* journal;
  };
  std::map<std::pair<std::string, std::string>, std::unique_ptr<ReviewJournal>> journals;
  std::vector<Cell> cells;
  for (const auto& b : config_.review.backends) {
    for (const auto& p : config_.review.prompts) {
      auto& j = journals[{b, p}];
      j = std::make_unique<ReviewJournal>(review_journal_path(b, p));
      for (const auto& s : corpus_.submissions) {
        for (int k = 0; k < config_.review.runs; ++k) cells.push_back({&b, &p, &s, k, j.get()});
      }
    }
  }

  CellRunner runner(report, options);
  ReviewOptions ro;
  ro.parse_retries = config_.review.parse_retries;
  ro.snap = config_.review.snap_scores;
  parallel_for(cells.size(), config_.workers, [&](std::size_t i) {
    const auto& c = cells[i];
    if (c.journal->contains(c.paper->id, c.run)) {
      ++runner.skipped;
      return;
    }
    if (!runner.claim()) return;
    try {
      const auto r = generate_review(backend(*c.backend), registry_, *c.prompt, *c.paper, c.run, ro);
      c.journal->append(r);
      if (!r.valid) runner.note(fmt::format("review {}/{}/{}/run{}: {}", *c.backend, *c.prompt, c.paper->id, c.run,
                                            r.failure_reason));
    } catch (const TransportError& e) {
      runner.fail(fmt::format("review {}/{}/{}/run{}: {}", *c.backend, *c.prompt, c.paper->id, c.run, e.what()));
    } catch (const RequestError& e) {
      runner.fail(fmt::format("review {}/{}/{}/run{}: {}", *c.backend, *c.prompt, c.paper->id, c.run, e.what()));
    }
  });
  std::vector<fs::path> artifacts;
  for (auto& [key, j] : journals) {
    j->finalize();
    artifacts.push_back(j->path());
  }
  runner.finish(cells.size());
  record_stage(report, artifacts);
  return report;
}

StageReport Experiment::judge(const RunOptions& options) {
  StageReport report;
  report.stage = "judge";
  if (config_.judge.backend.empty()) throw UsageError("config: judge.backend is not set");
  struct Cell {
    std::string backend;
    std::string prompt;
    const HumanReview* human;
    int human_index;
    ParsedReview review;
    JudgeJournal* journal;
  };
  std::map<std::pair<std::string, std::string>, std::unique_ptr<JudgeJournal>> journals;
  std::vector<Cell> cells;
  std::vector<std::string> missing;
  for (const auto& b : config_.review.backends) {
    for (const auto& p : config_.judge_prompts()) {
      const auto rpath = review_journal_path(b, p);
      if (!fs::exists(rpath)) {
        missing.push_back(fs::relative(rpath, run_dir_).generic_string());
        continue;
      }
      auto& j = journals[{b, p}];
      j = std::make_unique<JudgeJournal>(judge_journal_path(b, p));
      for (const auto& r : ReviewJournal(rpath).load()) {
        if (r.run_index != config_.judge.run_index || !r.valid) continue;
        const auto& humans = corpus_.reviews_for(r.paper_id);
        for (std::size_t h = 0; h < humans.size(); ++h) {
          if (humans[h].strengths.empty() && humans[h].weaknesses.empty()) continue;
          cells.push_back({b, p, &humans[h], static_cast<int>(h), r.parsed, j.get()});
        }
      }
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw UsageError("judge needs review artifacts; run `review` first. Missing:" + list);
  }

  CellRunner runner(report, options);
  const auto& judge_backend = backend(config_.judge.backend);
  parallel_for(cells.size(), config_.workers, [&](std::size_t i) {
    const auto& c = cells[i];
    if (c.journal->contains(c.human->paper_id, c.human_index)) {
      ++runner.skipped;
      return;
    }
    if (!runner.claim()) return;
    JudgeOptions jo;
    jo.parse_retries = config_.review.parse_retries;
    jo.trace_prefix = fmt::format("judge/{}/{}/{}/h{}", c.backend, c.prompt, c.human->paper_id, c.human_index);
    try {
      const auto v = judge_recall(judge_backend, registry_, *c.human, c.review, jo);
      c.journal->append(verdict_to_json(c.human->paper_id, c.human_index, v));
    } catch (const TransportError& e) {
      runner.fail(jo.trace_prefix + ": " + e.what());
    } catch (const RequestError& e) {
      runner.fail(jo.trace_prefix + ": " + e.what());
    }
  });
  std::vector<fs::path> artifacts;
  for (auto& [key, j] : journals) {
    j->finalize();
    artifacts.push_back(judge_journal_path(key.first, key.second));
  }
  runner.finish(cells.size());
  record_stage(report, artifacts);
  return report;
}

StageReport Experiment::isi(const RunOptions& options) {
  StageReport report;
  report.stage = "isi";
  if (config_.isi.settings.empty()) throw UsageError("no ISI settings configured (isi.settings or --setting)");
  struct Cell {
    IsiSetting setting;
    const Submission* paper;
  };
  std::vector<Cell> cells;
  for (auto s : config_.isi.settings) {
    for (const auto& p : corpus_.submissions) cells.push_back({s, &p});
  }
  IsiOptions io;
  io.n_iterations = config_.isi.iterations;
  io.review_prompt = config_.isi.review_prompt;
  io.parse_retries = config_.review.parse_retries;
  io.snap = config_.review.snap_scores;
  io.endpoint_runs = config_.isi.endpoint_runs;
  const auto& rb = backend(config_.isi.review_backend);
  const auto& eb = backend(config_.isi.edit_backend);

  CellRunner runner(report, options);
  parallel_for(cells.size(), config_.workers, [&](std::size_t i) {
    const auto& c = cells[i];
    const auto dir = trajectory_dir(c.setting, c.paper->id);
    if (trajectory_complete(dir)) {
      ++runner.skipped;
      return;
    }
    if (!runner.claim()) return;
    const auto label = fmt::format("isi {}/{}", to_string(c.setting), c.paper->id);
    try {
      const auto t = run_isi(rb, eb, registry_, *c.paper, c.setting, io);
      save_trajectory(t, dir);
      if (t.aborted) runner.note(label + ": aborted: " + t.abort_reason);
    } catch (const TransportError& e) {
      runner.fail(label + ": " + e.what());
    } catch (const RequestError& e) {
      runner.fail(label + ": " + e.what());
    }
  });
  runner.finish(cells.size());

  // Outcome tables over every completed trajectory.
  std::vector<Trajectory> done;
  std::vector<fs::path> artifacts;
  for (const auto& c : cells) {
    const auto dir = trajectory_dir(c.setting, c.paper->id);
    if (!trajectory_complete(dir)) continue;
    done.push_back(load_trajectory(dir));
    artifacts.push_back(dir / "trajectory.json");
  }
  const auto sides = config_.metrics.one_sided ? stats::Sides::greater : stats::Sides::two;
  json settings = json::array();
  for (const auto& so : classify_outcomes(done, sides)) {
    json groups = json::object();
    for (const auto& [scope, g] : so.groups) {
      groups[std::string(to_string(scope))] = {{"n", g.counts.n()},
                                               {"worse", g.counts.worse},
                                               {"equal", g.counts.equal},
                                               {"better", g.counts.better},
                                               {"pct_worse", g.counts.pct(Outcome::Worse)},
                                               {"pct_equal", g.counts.pct(Outcome::Equal)},
                                               {"pct_better", g.counts.pct(Outcome::Better)},
                                               {"mean_t0", g.t0.empty() ? json(nullptr) : json(stats::mean(g.t0))},
                                               {"mean_tN", g.tN.empty() ? json(nullptr) : json(stats::mean(g.tN))},
                                               {"paper_ids", g.paper_ids},
                                               {"t0", g.t0},
                                               {"tN", g.tN},
                                               {"stats", stats_json(g.stats)}};
    }
    settings.push_back({{"setting", to_string(so.setting)},
                        {"groups", groups},
                        {"n_aborted", so.n_aborted},
                        {"n_applied", so.n_applied},
                        {"n_failed_edits", so.n_failed_edits},
                        {"edit_types", so.applied_edit_types}});
  }
  const json result = {{"sides", config_.metrics.one_sided ? "greater" : "two"},
                       {"iterations", config_.isi.iterations},
                       {"n_trajectories", done.size()},
                       {"n_missing", cells.size() - done.size()},
                       {"settings", settings}};
  write_file_atomic(run_dir_ / kIsiResult, dump(result));
  artifacts.push_back(run_dir_ / kIsiResult);
  record_stage(report, artifacts);
  return report;
}

StageReport Experiment::evaluate() {
  StageReport report;
  report.stage = "evaluate";
  std::vector<std::string> missing;
  for (const auto& b : config_.review.backends) {
    for (const auto& p : config_.review.prompts) {
      if (!fs::exists(review_journal_path(b, p))) {
        missing.push_back(fs::relative(review_journal_path(b, p), run_dir_).generic_string());
      }
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw UsageError("evaluate needs review artifacts; run `review` first. Missing:" + list);
  }

  json alignment = json::array(), consistency_rows = json::array(), judge_rows = json::array(),
       counts = json::object();
  std::size_t scorable_total = 0;
  for (const auto& b : config_.review.backends) {
    std::vector<PromptAlignment> rows;
    for (const auto& p : config_.review.prompts) {
      const auto reviews = ReviewJournal(review_journal_path(b, p)).load();
      std::size_t valid = 0, scorable = 0;
      std::map<std::string, std::vector<double>> runs;
      for (const auto& r : reviews) {
        if (r.valid) ++valid;
        if (r.scorable()) {
          ++scorable;
          runs[r.paper_id].push_back(*r.overall());
        }
      }
      scorable_total += scorable;
      counts[b][p] = {{"records", reviews.size()}, {"valid", valid}, {"scorable", scorable}};
      rows.push_back(align_prompt(b, p, reviews, corpus_));
      alignment.push_back(alignment_json(rows.back(), "prompt", p));

      json cons = {{"model", b}, {"prompt", p}};
      try {
        const auto c = consistency(runs);
        cons["pct_inconsistent"] = c.pct_inconsistent;
        cons["pct_delta_gt_half"] = c.pct_delta_gt_half;
        cons["n_papers"] = c.n_papers;
        cons["n_excluded"] = c.excluded.size();
      } catch (const UndefinedMetric&) {
        cons["pct_inconsistent"] = nullptr;
        cons["pct_delta_gt_half"] = nullptr;
        cons["n_papers"] = 0;
        cons["n_excluded"] = runs.size();
      }
      consistency_rows.push_back(cons);

      if (const auto jpath = judge_journal_path(b, p); fs::exists(jpath)) {
        const auto s = summarize_recall(JudgeJournal(jpath).verdicts());
        judge_rows.push_back({{"model", b},
                              {"prompt", p},
                              {"s_recall", s.s_recall ? json(*s.s_recall) : json(nullptr)},
                              {"w_recall", s.w_recall ? json(*s.w_recall) : json(nullptr)},
                              {"n_strength", s.n_strength},
                              {"n_weakness", s.n_weakness},
                              {"n_invalid", s.n_invalid}});
      }
    }
    if (const auto best = best_prompt(rows)) {
      alignment.push_back(alignment_json(rows[*best], "best", fmt::format("Best ({})", rows[*best].prompt)));
    }
    if (rows.size() > 1) alignment.push_back(alignment_json(aggregate_all(b, rows), "all", "All"));
  }
  if (scorable_total == 0) throw DomainError("no valid reviews with an Overall score to evaluate");

  try {
    alignment.push_back(alignment_json(human_baseline(corpus_), "human", "human-human"));
  } catch (const UndefinedMetric& e) {
    report.messages.push_back(std::string("human-human row omitted: ") + e.what());
  }
  try {
    const auto base = constant_baseline(corpus_, config_.metrics.baseline_constant);
    alignment.push_back(alignment_json(base, "baseline", base.prompt));
  } catch (const UndefinedMetric& e) {
    report.messages.push_back(std::string("baseline row omitted: ") + e.what());
  }

  const json result = {{"alignment", alignment},
                       {"consistency", consistency_rows},
                       {"judge", judge_rows},
                       {"review_counts", counts}};
  write_file_atomic(run_dir_ / kEvaluationResult, dump(result));
  report.total_cells = report.new_cells = 1;
  record_stage(report, {run_dir_ / kEvaluationResult});
  return report;
}

StageReport Experiment::summarize() {
  StageReport report;
  report.stage = "summarize";
  const auto s = review_arcade::summarize(corpus_);
  json splits = json::object();
  for (auto split : kSplits) {
    const auto& ss = s.of(split);
    splits[std::string(to_string(split))] = {{"n_papers", ss.n_papers},
                                             {"reviews_per_paper_mean", ss.reviews_per_paper_mean},
                                             {"reviews_per_paper_std", ss.reviews_per_paper_std},
                                             {"length_histogram", ss.length_histogram}};
  }
  std::vector<double> centers;
  for (std::size_t k = 0; k < kHistogramBins; ++k) centers.push_back(s.bin_center(k));
  json issues = json::array();
  for (const auto& i : corpus_.issues) {
    issues.push_back({{"kind", to_string(i.kind)}, {"paper_id", i.paper_id}, {"message", i.message}});
  }
  const json result = {{"n_papers", corpus_.submissions.size()},
                       {"n_reviews", corpus_.review_count()},
                       {"n_filtered_out", n_filtered_out_},
                       {"bin_lo", s.bin_lo},
                       {"bin_width", s.bin_width},
                       {"bin_centers", centers},
                       {"splits", splits},
                       {"issues", issues}};
  write_file_atomic(run_dir_ / kCorpusResult, dump(result));
  for (const auto& w : corpus_.warnings) report.messages.push_back(w);
  report.total_cells = report.new_cells = 1;
  record_stage(report, {run_dir_ / kCorpusResult});
  return report;
}

}  // namespace review_arcade
