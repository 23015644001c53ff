#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "painpoint/analyzer.hpp"
#include "painpoint/clusterer.hpp"
#include "painpoint/errors.hpp"
#include "painpoint/gateway.hpp"
#include "painpoint/log_ingest.hpp"
#include "painpoint/logic_graph.hpp"
#include "painpoint/summarizer.hpp"

namespace painpoint {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read file: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return content;
}

// write-temp-then-rename so partially written stage files never appear
inline void atomic_write_file(const fs::path& path, std::string_view content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write file: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
  }
  fs::rename(tmp, path);
}

inline std::vector<fs::path> list_files_sorted(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

inline std::string session_id_from_path(const fs::path& path) {
  return path.stem().string();
}

// ---------------------------------------------------------------------------
// Default prompt wording (editable copies ship under data/prompts/)

inline constexpr std::string_view kDefaultSummarizerPrompt =
    R"(You are aligning player gameplay logs from a text-adventure game to the designer's intended game logic.
The game logic is organized into scenarios, each made of scenes. A scene is completed when its goal is achieved. A scene can only be completed after, for each of its requirement groups, at least one listed scene has already been completed.
For every game step in the section you receive, produce one record in this exact format:
[
{step: <step in round>, total: <cumulative step>, action: <True|False>, synopsis: <one sentence describing the player's action and outcome>, success: <True|False>, node: [<scene ids the step maps to, possibly empty>], helpful: <True|False>, completed nodes: [(<scene id>,<total step>), ...]},
...
]+sources: [<provider or NA for each tracked source, in order>]+completed: [<every completed (scene,step) pair so far, including earlier sections>]
Mark action True when the player performed an action and False when they spoke.
Mark success True when the step achieved its immediate intent.
Mark helpful True when the step contributes to progressing the game.
Use only scene ids from the game logic below, and record a completed node only at the step where the scene's goal is first achieved.)";

inline constexpr std::string_view kDefaultClusterPrompt =
    R"(You group one-sentence gameplay synopses that describe similar player experiences during one scene of a text-adventure game.
Reply with a strict JSON array. Each element is {"label": "<short description of the shared experience>", "members": [<1-based synopsis numbers>]}.
Every synopsis number must appear in exactly one group.)";

// ---------------------------------------------------------------------------
// Pipeline configuration

struct RunConfig {
  std::string graph_path;
  std::string log_dir;
  std::string out_dir;
  int window = 2;
  int round_length = 30;
  int retry_limit = 2;
  FlagConfig flags;
  GatewayConfig gateway;
  std::string examples_path;        // empty allowed only with require_examples=false
  bool require_examples = true;
  std::string system_prompt_path;   // empty -> built-in default
  std::string cluster_prompt_path;  // empty -> built-in default
  std::string input_format = "auto";  // raw | cleaned | auto
  double cluster_jaccard = 0.6;
  bool cluster_fallback = true;
  int cluster_retry_limit = 2;

  void validate() const {
    if (window < 1) throw ConfigError("window must be at least 1");
    if (round_length < 1) throw ConfigError("round length must be at least 1");
    if (retry_limit < 0) throw ConfigError("retry limit must be non-negative");
    flags.validate();
    if (input_format != "auto" && input_format != "raw" && input_format != "cleaned")
      throw ConfigError("input format must be raw, cleaned or auto");
  }
};

inline SummarizerConfig summarizer_config_from(const RunConfig& config) {
  SummarizerConfig sc;
  sc.window = config.window;
  sc.retry_limit = config.retry_limit;
  sc.round_length = config.round_length;
  sc.require_examples = config.require_examples;
  sc.system_template = config.system_prompt_path.empty()
                           ? std::string(kDefaultSummarizerPrompt)
                           : read_file(config.system_prompt_path);
  if (!config.examples_path.empty())
    sc.examples = ExampleSet::parse(read_file(config.examples_path));
  return sc;
}

inline ClusterConfig cluster_config_from(const RunConfig& config) {
  ClusterConfig cc;
  cc.retry_limit = config.cluster_retry_limit;
  cc.jaccard_threshold = config.cluster_jaccard;
  cc.fallback_enabled = config.cluster_fallback;
  cc.prompt_template = config.cluster_prompt_path.empty()
                           ? std::string(kDefaultClusterPrompt)
                           : read_file(config.cluster_prompt_path);
  return cc;
}

inline bool looks_like_raw_log(std::string_view text) {
  for (std::string_view line : detail::split_lines(text)) {
    if (detail::trim(line).empty()) continue;
    std::string_view rest;
    return detail::split_log_line(line, rest);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Report assembly

struct ExcludedSession {
  std::string session_id;
  std::string reason;
};

struct BugReport {
  int players_total = 0;
  std::vector<std::string> sessions;
  std::vector<ExcludedSession> excluded;
  std::vector<SceneStats> stats;
  std::vector<PainPointFlag> flags;
  std::vector<std::pair<SceneId, ClusterResult>> clusters;  // one entry per flagged scene
  std::vector<std::pair<std::string, std::vector<std::pair<int, int>>>>
      degraded_sessions;  // session id -> unmapped section ranges
};

inline nlohmann::ordered_json report_to_json(const BugReport& report,
                                             const LogicGraph& graph) {
  nlohmann::ordered_json doc;
  doc["cohort"] = {{"players_total", report.players_total},
                   {"sessions", report.sessions}};
  nlohmann::ordered_json excluded = nlohmann::ordered_json::array();
  for (const ExcludedSession& e : report.excluded)
    excluded.push_back({{"session", e.session_id}, {"reason", e.reason}});
  doc["cohort"]["excluded"] = std::move(excluded);

  nlohmann::ordered_json stats_doc = stats_to_json(report.stats, report.flags, graph);
  doc["scenes"] = std::move(stats_doc["scenes"]);
  doc["flags"] = std::move(stats_doc["flags"]);

  nlohmann::ordered_json clusters = nlohmann::ordered_json::array();
  for (const auto& [scene, result] : report.clusters)
    clusters.push_back(clusters_to_json(scene, result));
  doc["clusters"] = std::move(clusters);

  nlohmann::ordered_json degraded_sessions = nlohmann::ordered_json::array();
  for (const auto& [session, ranges] : report.degraded_sessions) {
    nlohmann::ordered_json r = nlohmann::ordered_json::array();
    for (const auto& [from, to] : ranges) r.push_back({from, to});
    degraded_sessions.push_back({{"session", session}, {"sections", std::move(r)}});
  }
  nlohmann::ordered_json cluster_fallbacks = nlohmann::ordered_json::array();
  for (const auto& [scene, result] : report.clusters)
    if (result.degraded) cluster_fallbacks.push_back(scene);
  doc["degraded"] = {{"sessions", std::move(degraded_sessions)},
                     {"cluster_fallbacks", std::move(cluster_fallbacks)}};
  return doc;
}

namespace detail {

inline std::string percent(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", rate * 100.0);
  return buf;
}

inline std::string fixed6(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

inline std::string csv_quote(const std::string& field) {
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += "\"";
  return out;
}

}  // namespace detail

// Columnar chart data (Fig-4a style): one row per scene in scenario order,
// scenario columns give the bracket grouping.
inline std::string emit_chart_data(const std::vector<SceneStats>& stats,
                                   const std::vector<PainPointFlag>& flags,
                                   const LogicGraph& graph) {
  std::map<SceneId, const PainPointFlag*> flag_of;
  for (const PainPointFlag& f : flags) flag_of[f.scene] = &f;
  std::string out =
      "scene_id,scene_title,scenario_id,scenario_title,completion_rate,flagged,reasons\n";
  for (const SceneStats& row : stats) {
    const Scene& scene = graph.scene(row.id);
    const Scenario& scenario = graph.scenario(scene.scenario_id);
    std::string reasons;
    bool flagged = flag_of.count(row.id) > 0;
    if (flagged) {
      for (FlagReason r : flag_of[row.id]->reasons) {
        if (!reasons.empty()) reasons += "+";
        reasons += flag_reason_name(r);
      }
    }
    out += row.id + "," + detail::csv_quote(scene.title) + "," + scenario.id + "," +
           detail::csv_quote(scenario.title) + "," + detail::fixed6(row.completion_rate) +
           "," + (flagged ? "true" : "false") + "," + reasons + "\n";
  }
  return out;
}

// Human-readable narrative: flags first, then clusters per flagged scene.
inline std::string render_report_markdown(const BugReport& report,
                                          const LogicGraph& graph) {
  std::string out = "# Pain-point report\n\n";
  out += "Cohort: " + std::to_string(report.players_total) + " session" +
         (report.players_total == 1 ? "" : "s");
  if (!report.excluded.empty())
    out += " (" + std::to_string(report.excluded.size()) + " excluded)";
  out += ".\n\n";
  if (!report.excluded.empty()) {
    out += "Excluded sessions:\n";
    for (const ExcludedSession& e : report.excluded)
      out += "- " + e.session_id + ": " + e.reason + "\n";
    out += "\n";
  }

  out += "## Flagged scenes\n\n";
  if (report.flags.empty()) {
    out += "No scene met a flagging rule.\n\n";
  } else {
    for (const PainPointFlag& flag : report.flags) {
      const Scene& scene = graph.scene(flag.scene);
      out += "- " + flag.scene + " \"" + scene.title + "\" (scenario " +
             scene.scenario_id + "): rate " + detail::percent(flag.evidence.rate);
      for (FlagReason r : flag.reasons) {
        out += std::string(", ") + flag_reason_name(r);
        if (r == FlagReason::low)
          out += " (< " + detail::percent(*flag.evidence.low_threshold) + ")";
        if (r == FlagReason::drop)
          out += " (< half of predecessor at " +
                 detail::percent(*flag.evidence.predecessor_rate) + ")";
        if (r == FlagReason::high)
          out += " (> " + detail::percent(*flag.evidence.high_threshold) + ")";
      }
      out += "\n";
    }
    out += "\n";
  }

  out += "## Completion rates\n\n";
  out += "| Scene | Title | Scenario | Completed | Rate | Attempt steps |\n";
  out += "|---|---|---|---|---|---|\n";
  for (const SceneStats& row : report.stats) {
    const Scene& scene = graph.scene(row.id);
    out += "| " + row.id + " | " + scene.title + " | " + scene.scenario_id + " | " +
           std::to_string(row.players_completed) + "/" +
           std::to_string(row.players_total) + " | " +
           detail::percent(row.completion_rate) + " | " +
           std::to_string(row.attempt_steps) + " |\n";
  }
  out += "\n";

  out += "## Clusters per flagged scene\n\n";
  if (report.clusters.empty()) out += "No flagged scenes to cluster.\n";
  for (const auto& [scene_id, result] : report.clusters) {
    const Scene& scene = graph.scene(scene_id);
    out += "### " + scene_id + " \"" + scene.title + "\"\n\n";
    if (result.degraded)
      out += "_Deterministic fallback clustering used (" + result.note + ")._\n\n";
    if (result.clusters.empty()) out += "No synopses were mapped to this scene.\n";
    for (const SynopsisCluster& cluster : result.clusters) {
      out += "- (" + std::to_string(cluster.members.size()) + ") " + cluster.label + " [";
      for (size_t i = 0; i < cluster.members.size(); ++i) {
        if (i) out += ", ";
        out += cluster.members[i].session_id + "#" +
               std::to_string(cluster.members[i].step_total);
      }
      out += "]\n";
    }
    out += "\n";
  }

  out += "## Degraded runs\n\n";
  if (report.degraded_sessions.empty()) {
    bool any_fallback = false;
    for (const auto& [scene, result] : report.clusters)
      if (result.degraded) any_fallback = true;
    if (!any_fallback) out += "None.\n";
  }
  for (const auto& [session, ranges] : report.degraded_sessions) {
    out += "- session " + session + ": unmapped step ranges";
    for (const auto& [from, to] : ranges)
      out += " [" + std::to_string(from) + "-" + std::to_string(to) + "]";
    out += "\n";
  }
  for (const auto& [scene, result] : report.clusters)
    if (result.degraded)
      out += "- scene " + scene + ": clustering fell back (" + result.note + ")\n";
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end pipeline: clean -> segment -> summarize -> analyze -> cluster ->
// report, persisting every intermediate document under out_dir.

inline BugReport run_pipeline(const RunConfig& config, Gateway& gateway) {
  config.validate();
  LogicGraph graph = LogicGraph::parse(read_file(config.graph_path));
  SummarizerConfig summarizer_config = summarizer_config_from(config);
  ClusterConfig cluster_config = cluster_config_from(config);

  std::vector<fs::path> log_files = list_files_sorted(config.log_dir);
  if (log_files.empty()) throw IngestError("no sessions: log directory is empty");

  BugReport report;
  std::vector<SessionSummary> summaries;
  fs::path out_dir(config.out_dir);

  for (const fs::path& path : log_files) {
    std::string session_id = session_id_from_path(path);
    try {
      std::string text = read_file(path);
      bool raw = config.input_format == "raw" ||
                 (config.input_format == "auto" && looks_like_raw_log(text));
      CleanOptions clean_options{session_id, config.round_length};
      CleanedLog log = raw ? clean_log(parse_raw_log(text), clean_options)
                           : parse_cleaned(text, clean_options);
      if (log.steps.empty())
        throw IngestError("no game steps found in session " + session_id);
      validate_cleaned(log, config.round_length);
      atomic_write_file(out_dir / "cleaned" / (session_id + ".log"), render_cleaned(log));

      SessionSummary session = summarize_session(graph, log, gateway, summarizer_config);
      atomic_write_file(out_dir / "summaries" / (session_id + ".json"),
                        session_to_json(session).dump(2) + "\n");
      if (!session.degraded_sections.empty())
        report.degraded_sessions.emplace_back(session_id, session.degraded_sections);
      report.sessions.push_back(session_id);
      summaries.push_back(std::move(session));
    } catch (const GatewayError&) {
      throw;  // provider trouble aborts the run; it would skew every session
    } catch (const Error& e) {
      report.excluded.push_back({session_id, e.what()});
    }
  }
  if (summaries.empty()) throw IngestError("no sessions could be ingested");

  report.players_total = static_cast<int>(summaries.size());
  report.stats = completion_table(summaries, graph);
  report.flags = flag_pain_points(report.stats, graph, config.flags);
  atomic_write_file(out_dir / "stats.json",
                    stats_to_json(report.stats, report.flags, graph).dump(2) + "\n");
  atomic_write_file(out_dir / "chart.csv",
                    emit_chart_data(report.stats, report.flags, graph));

  for (const PainPointFlag& flag : report.flags) {
    std::vector<SynopsisItem> items = collect_synopses(summaries, flag.scene, graph);
    ClusterResult result;
    if (!items.empty())
      result = cluster_synopses(items, gateway, cluster_config, flag.scene,
                                graph.scene(flag.scene).title);
    atomic_write_file(out_dir / "clusters" / (flag.scene + ".json"),
                      clusters_to_json(flag.scene, result).dump(2) + "\n");
    report.clusters.emplace_back(flag.scene, std::move(result));
  }

  atomic_write_file(out_dir / "report.json", report_to_json(report, graph).dump(2) + "\n");
  atomic_write_file(out_dir / "report.md", render_report_markdown(report, graph));
  return report;
}

}  // namespace painpoint
