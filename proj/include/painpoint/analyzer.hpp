#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "painpoint/errors.hpp"
#include "painpoint/logic_graph.hpp"
#include "painpoint/summary.hpp"

namespace painpoint {

struct SceneStats {
  SceneId id;
  int players_completed = 0;
  int players_total = 0;
  double completion_rate = 0.0;
  std::vector<int> completion_steps;  // step_total per completing player, session order
  int attempt_steps = 0;              // steps mapped to this scene across all players
  bool operator==(const SceneStats&) const = default;
};

enum class FlagReason { low, drop, high };

inline const char* flag_reason_name(FlagReason r) {
  switch (r) {
    case FlagReason::low: return "LOW";
    case FlagReason::drop: return "DROP";
    case FlagReason::high: return "HIGH";
  }
  return "?";
}

struct FlagEvidence {
  double rate = 0.0;
  std::optional<double> low_threshold;
  std::optional<double> predecessor_rate;
  std::optional<double> drop_threshold;
  std::optional<double> high_threshold;
};

struct PainPointFlag {
  SceneId scene;
  std::vector<FlagReason> reasons;
  FlagEvidence evidence;
};

struct FlagConfig {
  double tau_low = 0.20;
  double drop_ratio = 0.5;
  std::optional<double> tau_high;  // disabled by default

  void validate() const {
    if (!(tau_low > 0 && tau_low < 1)) throw ConfigError("tau_low must be in (0,1)");
    if (!(drop_ratio > 0 && drop_ratio < 1))
      throw ConfigError("drop_ratio must be in (0,1)");
    if (tau_high && !(*tau_high > 0 && *tau_high <= 1))
      throw ConfigError("tau_high must be in (0,1]");
  }
};

// One row per scene in report order. A player completed a scene iff it
// appears in their final completed list.
inline std::vector<SceneStats> completion_table(const std::vector<SessionSummary>& summaries,
                                                const LogicGraph& graph) {
  if (summaries.empty()) throw ValidationError("empty cohort: no session summaries");
  std::vector<SceneStats> table;
  for (const SceneId& id : graph.report_order()) {
    SceneStats row;
    row.id = id;
    row.players_total = static_cast<int>(summaries.size());
    for (const SessionSummary& session : summaries) {
      for (const Completion& c : session.completed) {
        if (c.scene == id) {
          row.players_completed += 1;
          row.completion_steps.push_back(c.step_total);
          break;
        }
      }
      for (const StepSummary& step : session.steps)
        for (const SceneId& mapped : step.mapped_scenes)
          if (mapped == id) row.attempt_steps += 1;
    }
    row.completion_rate =
        static_cast<double>(row.players_completed) / row.players_total;
    table.push_back(std::move(row));
  }
  return table;
}

// LOW: rate < tau_low. DROP: rate < drop_ratio * max rate over the scene's
// immediate prerequisite tails in the same scenario (no evaluation when there
// are none). HIGH: rate > tau_high when configured.
inline std::vector<PainPointFlag> flag_pain_points(const std::vector<SceneStats>& stats,
                                                   const LogicGraph& graph,
                                                   const FlagConfig& config) {
  config.validate();
  std::map<SceneId, double> rate_of;
  for (const SceneStats& row : stats) rate_of[row.id] = row.completion_rate;
  for (const Scene& scene : graph.scenes())
    if (!rate_of.count(scene.id))
      throw ValidationError("stats table is missing scene " + scene.id);

  std::vector<PainPointFlag> flags;
  for (const SceneStats& row : stats) {
    PainPointFlag flag;
    flag.scene = row.id;
    flag.evidence.rate = row.completion_rate;

    if (row.completion_rate < config.tau_low) {
      flag.reasons.push_back(FlagReason::low);
      flag.evidence.low_threshold = config.tau_low;
    }

    const std::string& scenario_id = graph.scene(row.id).scenario_id;
    std::optional<double> predecessor;
    for (const PrereqGroup& group : graph.prerequisites(row.id))
      for (const SceneId& tail : group.tails)
        if (graph.scene(tail).scenario_id == scenario_id) {
          double r = rate_of.at(tail);
          if (!predecessor || r > *predecessor) predecessor = r;
        }
    if (predecessor) {
      double threshold = config.drop_ratio * *predecessor;
      if (row.completion_rate < threshold) {
        flag.reasons.push_back(FlagReason::drop);
        flag.evidence.predecessor_rate = predecessor;
        flag.evidence.drop_threshold = threshold;
      }
    }

    if (config.tau_high && row.completion_rate > *config.tau_high) {
      flag.reasons.push_back(FlagReason::high);
      flag.evidence.high_threshold = config.tau_high;
    }

    if (!flag.reasons.empty()) flags.push_back(std::move(flag));
  }
  return flags;
}

// Per-player attempt counts and success tallies for one scene.
struct AttemptProfile {
  // session id -> (steps mapped to the scene, successful ones)
  std::map<std::string, std::pair<int, int>> per_player;
  int total_attempts = 0;
  int total_successes = 0;
};

inline AttemptProfile attempt_profile(const std::vector<SessionSummary>& summaries,
                                      const SceneId& scene, const LogicGraph& graph) {
  graph.scene(scene);  // unknown-id check
  AttemptProfile profile;
  for (const SessionSummary& session : summaries) {
    auto& [attempts, successes] = profile.per_player[session.session_id];
    for (const StepSummary& step : session.steps) {
      bool mapped = false;
      for (const SceneId& id : step.mapped_scenes)
        if (id == scene) mapped = true;
      if (!mapped) continue;
      attempts += 1;
      if (step.success) successes += 1;
    }
    profile.total_attempts += attempts;
    profile.total_successes += successes;
  }
  return profile;
}

// ---------------------------------------------------------------------------
// Stats document (strict JSON), consumed by the reporter.

inline nlohmann::ordered_json stats_to_json(const std::vector<SceneStats>& stats,
                                            const std::vector<PainPointFlag>& flags,
                                            const LogicGraph& graph) {
  nlohmann::ordered_json scenes = nlohmann::ordered_json::array();
  for (const SceneStats& row : stats) {
    const Scene& scene = graph.scene(row.id);
    scenes.push_back({{"id", row.id},
                      {"title", scene.title},
                      {"scenario", scene.scenario_id},
                      {"players_completed", row.players_completed},
                      {"players_total", row.players_total},
                      {"completion_rate", row.completion_rate},
                      {"completion_steps", row.completion_steps},
                      {"attempt_steps", row.attempt_steps}});
  }
  nlohmann::ordered_json flag_rows = nlohmann::ordered_json::array();
  for (const PainPointFlag& flag : flags) {
    nlohmann::ordered_json reasons = nlohmann::ordered_json::array();
    for (FlagReason r : flag.reasons) reasons.push_back(flag_reason_name(r));
    nlohmann::ordered_json evidence{{"rate", flag.evidence.rate}};
    if (flag.evidence.low_threshold) evidence["low_threshold"] = *flag.evidence.low_threshold;
    if (flag.evidence.predecessor_rate)
      evidence["predecessor_rate"] = *flag.evidence.predecessor_rate;
    if (flag.evidence.drop_threshold)
      evidence["drop_threshold"] = *flag.evidence.drop_threshold;
    if (flag.evidence.high_threshold)
      evidence["high_threshold"] = *flag.evidence.high_threshold;
    flag_rows.push_back({{"scene", flag.scene},
                         {"reasons", std::move(reasons)},
                         {"evidence", std::move(evidence)}});
  }
  int players_total = stats.empty() ? 0 : stats.front().players_total;
  return nlohmann::ordered_json{{"players_total", players_total},
                                {"scenes", std::move(scenes)},
                                {"flags", std::move(flag_rows)}};
}

struct StatsDocument {
  std::vector<SceneStats> stats;
  std::vector<PainPointFlag> flags;
};

inline StatsDocument stats_from_json(const nlohmann::json& doc) {
  StatsDocument out;
  for (const auto& row : doc.at("scenes")) {
    SceneStats s;
    s.id = row.at("id").get<std::string>();
    s.players_completed = row.at("players_completed").get<int>();
    s.players_total = row.at("players_total").get<int>();
    s.completion_rate = row.at("completion_rate").get<double>();
    for (const auto& v : row.at("completion_steps")) s.completion_steps.push_back(v.get<int>());
    s.attempt_steps = row.at("attempt_steps").get<int>();
    out.stats.push_back(std::move(s));
  }
  for (const auto& row : doc.at("flags")) {
    PainPointFlag f;
    f.scene = row.at("scene").get<std::string>();
    for (const auto& r : row.at("reasons")) {
      std::string name = r.get<std::string>();
      if (name == "LOW") f.reasons.push_back(FlagReason::low);
      else if (name == "DROP") f.reasons.push_back(FlagReason::drop);
      else if (name == "HIGH") f.reasons.push_back(FlagReason::high);
    }
    const auto& evidence = row.at("evidence");
    f.evidence.rate = evidence.at("rate").get<double>();
    if (evidence.contains("low_threshold"))
      f.evidence.low_threshold = evidence.at("low_threshold").get<double>();
    if (evidence.contains("predecessor_rate"))
      f.evidence.predecessor_rate = evidence.at("predecessor_rate").get<double>();
    if (evidence.contains("drop_threshold"))
      f.evidence.drop_threshold = evidence.at("drop_threshold").get<double>();
    if (evidence.contains("high_threshold"))
      f.evidence.high_threshold = evidence.at("high_threshold").get<double>();
    out.flags.push_back(std::move(f));
  }
  return out;
}

}  // namespace painpoint
