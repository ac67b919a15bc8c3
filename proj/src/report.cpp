#include "review_arcade/report.hpp"

#include <cmath>
#include <map>

#include <fmt/format.h>
#include <json.hpp>

#include "review_arcade/error.hpp"
#include "review_arcade/experiment.hpp"
#include "review_arcade/util.hpp"

namespace review_arcade {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string_view to_string(ReportFormat f) {
  switch (f) {
    case ReportFormat::csv: return "csv";
    case ReportFormat::json: return "json";
    case ReportFormat::plotdata: return "plotdata";
  }
  return "unknown";
}

ReportFormat parse_report_format(std::string_view s) {
  for (auto f : kAllReportFormats) {
    if (to_string(f) == s) return f;
  }
  throw UsageError(fmt::format("unknown report format '{}' (csv, json, plotdata)", s));
}

std::string format_fixed(double v, int decimals) {
  if (std::isnan(v)) return "n/a";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  auto s = fmt::format("{:.{}f}", v, decimals);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

namespace {

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Numbers stored in results JSON; strings "inf"/"-inf" stand for infinities.
std::string num(const json& v, int decimals) {
  if (v.is_null()) return "n/a";
  if (v.is_string()) return v.get<std::string>();
  return format_fixed(v.get<double>(), decimals);
}

std::string pct(const json& v) { return v.is_null() ? "n/a" : format_fixed(v.get<double>() * 100.0, 2); }

std::string count(const json& v) { return v.is_null() ? "n/a" : std::to_string(v.get<long long>()); }

std::string flag(const json& v) { return v.get<bool>() ? "true" : "false"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string to_csv(const Table& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_field(cells[i]);
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

ordered_json to_json_rows(const Table& t) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : t.rows) {
    ordered_json row = ordered_json::object();
    for (std::size_t i = 0; i < t.header.size(); ++i) row[t.header[i]] = r[i];
    rows.push_back(row);
  }
  return rows;
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", p.string(), e.what()));
  }
}

constexpr const char* kScopeNames[] = {"accepted", "rejected", "combined"};

Table alignment_table(const json& eval) {
  Table t{"alignment",
          {"model", "prompt", "split", "mae_mean", "mae_std", "r_mean", "r_std", "n_papers", "n_excluded", "r_clamped"},
          {}};
  for (const auto& row : eval.at("alignment")) {
    for (const char* scope : kScopeNames) {
      const auto& c = row.at("cells").at(scope);
      t.rows.push_back({row.at("model").get<std::string>(), row.at("prompt").get<std::string>(), scope,
                        num(c.at("mae").at("mean"), 2), num(c.at("mae").at("std"), 2), num(c.at("r").at("mean"), 3),
                        num(c.at("r").at("std"), 3), count(c.at("n_papers")), count(c.at("n_excluded")),
                        flag(c.at("r_clamped"))});
    }
  }
  return t;
}

Table consistency_table(const json& eval) {
  Table t{"consistency", {"model", "prompt", "pct_inconsistent", "pct_delta_gt_half", "n_papers", "n_excluded"}, {}};
  for (const auto& row : eval.at("consistency")) {
    t.rows.push_back({row.at("model").get<std::string>(), row.at("prompt").get<std::string>(),
                      num(row.at("pct_inconsistent"), 2), num(row.at("pct_delta_gt_half"), 2),
                      count(row.at("n_papers")), count(row.at("n_excluded"))});
  }
  return t;
}

Table judge_table(const json& eval) {
  Table t{"judge_recall",
          {"model", "prompt", "s_recall_pct", "w_recall_pct", "n_strength", "n_weakness", "n_invalid"},
          {}};
  for (const auto& row : eval.at("judge")) {
    t.rows.push_back({row.at("model").get<std::string>(), row.at("prompt").get<std::string>(),
                      pct(row.at("s_recall")), pct(row.at("w_recall")), count(row.at("n_strength")),
                      count(row.at("n_weakness")), count(row.at("n_invalid"))});
  }
  return t;
}

Table isi_table(const json& isi) {
  Table t{"isi_outcomes",
          {"setting", "split", "n", "worse_pct", "equal_pct", "better_pct", "mean_t0", "mean_tN", "t", "df", "p", "d",
           "degenerate"},
          {}};
  for (const auto& s : isi.at("settings")) {
    for (const char* scope : kScopeNames) {
      const auto& g = s.at("groups").at(scope);
      std::vector<std::string> row{s.at("setting").get<std::string>(), scope, count(g.at("n")),
                                   num(g.at("pct_worse"), 2), num(g.at("pct_equal"), 2), num(g.at("pct_better"), 2),
                                   num(g.at("mean_t0"), 2), num(g.at("mean_tN"), 2)};
      if (const auto& st = g.at("stats"); st.is_null()) {
        row.insert(row.end(), {"n/a", "n/a", "n/a", "n/a", "n/a"});
      } else {
        row.insert(row.end(), {num(st.at("t"), 3), count(st.at("df")), num(st.at("p"), 3), num(st.at("d"), 3),
                               flag(st.at("degenerate"))});
      }
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

Table isi_settings_table(const json& isi) {
  Table t{"isi_settings", {"setting", "n_aborted", "edits_applied", "edits_failed"}, {}};
  for (const auto& s : isi.at("settings")) {
    t.rows.push_back({s.at("setting").get<std::string>(), count(s.at("n_aborted")), count(s.at("n_applied")),
                      count(s.at("n_failed_edits"))});
  }
  return t;
}

Table corpus_table(const json& corpus) {
  Table t{"corpus_summary", {"split", "n_papers", "reviews_per_paper_mean", "reviews_per_paper_std"}, {}};
  for (const char* split : {"accepted", "rejected"}) {
    const auto& s = corpus.at("splits").at(split);
    t.rows.push_back({split, count(s.at("n_papers")), num(s.at("reviews_per_paper_mean"), 2),
                      num(s.at("reviews_per_paper_std"), 2)});
  }
  return t;
}

Table histogram_table(const json& corpus) {
  Table t{"length_histogram", {"bin_center", "accepted", "rejected"}, {}};
  const auto& centers = corpus.at("bin_centers");
  const auto& acc = corpus.at("splits").at("accepted").at("length_histogram");
  const auto& rej = corpus.at("splits").at("rejected").at("length_histogram");
  for (std::size_t k = 0; k < centers.size(); ++k) {
    t.rows.push_back({num(centers[k], 2), count(acc[k]), count(rej[k])});
  }
  return t;
}

Table edit_types_table(const json& isi) {
  Table t{"edit_types", {"setting", "edit_type", "count"}, {}};
  for (const auto& s : isi.at("settings")) {
    for (const auto& [name, c] : s.at("edit_types").items()) {
      t.rows.push_back({s.at("setting").get<std::string>(), name, count(c)});
    }
  }
  return t;
}

Table isi_scores_table(const json& isi) {
  Table t{"isi_scores", {"setting", "paper_id", "split", "t0", "tN"}, {}};
  for (const auto& s : isi.at("settings")) {
    for (const char* scope : {"accepted", "rejected"}) {
      const auto& g = s.at("groups").at(scope);
      for (std::size_t i = 0; i < g.at("paper_ids").size(); ++i) {
        t.rows.push_back({s.at("setting").get<std::string>(), g["paper_ids"][i].get<std::string>(), scope,
                          num(g["t0"][i], 2), num(g["tN"][i], 2)});
      }
    }
  }
  return t;
}

Table prompt_r_table(const json& eval) {
  Table t{"prompt_r", {"model", "prompt", "split", "r_mean", "r_std"}, {}};
  for (const auto& row : eval.at("alignment")) {
    if (row.at("kind") != "prompt") continue;
    for (const char* scope : kScopeNames) {
      const auto& r = row.at("cells").at(scope).at("r");
      t.rows.push_back({row.at("model").get<std::string>(), row.at("prompt").get<std::string>(), scope,
                        num(r.at("mean"), 3), num(r.at("std"), 3)});
    }
  }
  return t;
}

bool any_degenerate(const json& isi) {
  for (const auto& s : isi.at("settings")) {
    for (const auto& [scope, g] : s.at("groups").items()) {
      if (!g.at("stats").is_null() && g["stats"].at("degenerate").get<bool>()) return true;
    }
  }
  return false;
}

}  // namespace

std::vector<fs::path> write_report(const fs::path& run_dir, const std::vector<ReportFormat>& formats) {
  const auto manifest_path = run_dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw UsageError(fmt::format("{} has no manifest.json; run a pipeline stage first", run_dir.string()));
  }
  const json manifest = read_json(manifest_path);
  const auto& config = manifest.at("config");

  const bool want_eval = !config.at("review").at("prompts").empty();
  const bool want_isi = !config.at("isi").at("settings").empty();
  std::vector<std::string> missing;
  if (want_eval && !fs::exists(run_dir / kEvaluationResult)) missing.push_back(std::string(kEvaluationResult) + " (run `evaluate`)");
  if (want_isi && !fs::exists(run_dir / kIsiResult)) missing.push_back(std::string(kIsiResult) + " (run `isi`)");
  if (!fs::exists(run_dir / kCorpusResult)) missing.push_back(std::string(kCorpusResult) + " (run `summarize`)");
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw UsageError("report prerequisites missing:" + list);
  }

  const json corpus = read_json(run_dir / kCorpusResult);
  const json eval = want_eval ? read_json(run_dir / kEvaluationResult) : json();
  const json isi = want_isi ? read_json(run_dir / kIsiResult) : json();

  std::vector<Table> csv_tables, plot_tables;
  if (want_eval) {
    csv_tables.push_back(alignment_table(eval));
    csv_tables.push_back(consistency_table(eval));
    if (!eval.at("judge").empty()) csv_tables.push_back(judge_table(eval));
    plot_tables.push_back(prompt_r_table(eval));
  }
  if (want_isi) {
    csv_tables.push_back(isi_table(isi));
    csv_tables.push_back(isi_settings_table(isi));
    plot_tables.push_back(edit_types_table(isi));
    plot_tables.push_back(isi_scores_table(isi));
  }
  csv_tables.push_back(corpus_table(corpus));
  plot_tables.push_back(histogram_table(corpus));

  std::vector<std::string> notes{
      "std columns are population standard deviations over runs (over prompts for All rows).",
      "r is the best-match Pearson correlation; combined rows average the two splits, r in Fisher z space.",
      "n/a marks an undefined value, e.g. r on fewer than two papers or on constant scores, and any combined r with an undefined split.",
  };
  if (want_isi) {
    notes.push_back(isi.at("sides") == "greater"
                        ? "ISI p-values are one-sided paired t-tests (alternative: scores increase)."
                        : "ISI p-values are two-sided paired t-tests.");
    notes.push_back("No normality or homoskedasticity check was performed and no multiple-comparison correction applied.");
    if (any_degenerate(isi)) {
      notes.push_back("inf: every paired difference equals the same non-zero shift, so t and d diverge and p is 0.");
    }
  }

  const auto out_dir = run_dir / "report";
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  auto emit = [&](const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    write_file_atomic(p, text);
    written.push_back(p);
  };
  std::string notes_text;
  for (const auto& n : notes) notes_text += n + "\n";

  for (auto f : formats) {
    switch (f) {
      case ReportFormat::csv:
        for (const auto& t : csv_tables) emit(out_dir / (t.name + ".csv"), to_csv(t));
        emit(out_dir / "notes.txt", notes_text);
        break;
      case ReportFormat::plotdata:
        for (const auto& t : plot_tables) emit(out_dir / "plotdata" / (t.name + ".csv"), to_csv(t));
        break;
      case ReportFormat::json: {
        ordered_json bundle = ordered_json::object();
        bundle["experiment"] = manifest.at("experiment");
        bundle["config_hash"] = manifest.at("config_hash");
        ordered_json tables = ordered_json::object();
        for (const auto& t : csv_tables) tables[t.name] = to_json_rows(t);
        for (const auto& t : plot_tables) tables[t.name] = to_json_rows(t);
        bundle["tables"] = tables;
        bundle["notes"] = notes;
        emit(out_dir / "bundle.json", bundle.dump(2, ' ', false, json::error_handler_t::replace) + "\n");
        break;
      }
    }
  }
  return written;
}

}  // namespace review_arcade
