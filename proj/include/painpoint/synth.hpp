#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "painpoint/analyzer.hpp"
#include "painpoint/errors.hpp"
#include "painpoint/log_ingest.hpp"
#include "painpoint/logic_graph.hpp"
#include "painpoint/summary.hpp"
#include "painpoint/summarizer.hpp"

namespace painpoint {

// splitmix64; all draws go through it so generated fixtures are identical on
// every platform (std:: distributions are implementation-defined).
struct Rng {
  uint64_t state;
  explicit Rng(uint64_t seed) : state(seed) {}

  uint64_t next() {
    state += 0x9E3779B97F4A7C15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  uint32_t below(uint32_t n) { return n == 0 ? 0 : static_cast<uint32_t>(next() % n); }
};

struct PlayerPolicy {
  std::map<SceneId, double> success;  // per-scene attempt-success probability
  double default_success = 1.0;
  double wander_rate = 0.0;
  uint64_t seed = 0;

  struct SourceRule {
    SceneId scene;
    std::string provider;
  };
  std::map<std::string, SourceRule> sources;  // fact -> (revealing scene, provider)

  double success_for(const SceneId& id) const {
    auto it = success.find(id);
    return it == success.end() ? default_success : it->second;
  }

  static PlayerPolicy from_json(const nlohmann::json& doc) {
    PlayerPolicy p;
    if (doc.contains("success"))
      for (const auto& [scene, prob] : doc.at("success").items())
        p.success[scene] = prob.get<double>();
    p.default_success = doc.value("default_success", 1.0);
    p.wander_rate = doc.value("wander_rate", 0.0);
    p.seed = doc.value("seed", 0ull);
    if (doc.contains("sources"))
      for (const auto& [fact, rule] : doc.at("sources").items())
        p.sources[fact] = {rule.at("scene").get<std::string>(),
                           rule.at("provider").get<std::string>()};
    for (const auto& [scene, prob] : p.success)
      if (prob < 0 || prob > 1)
        throw ConfigError("policy probability for " + scene + " outside [0,1]");
    if (p.wander_rate < 0 || p.wander_rate > 1)
      throw ConfigError("policy wander rate outside [0,1]");
    return p;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json success_obj = nlohmann::ordered_json::object();
    for (const auto& [scene, prob] : success) success_obj[scene] = prob;
    nlohmann::ordered_json sources_obj = nlohmann::ordered_json::object();
    for (const auto& [fact, rule] : sources)
      sources_obj[fact] = {{"scene", rule.scene}, {"provider", rule.provider}};
    return nlohmann::ordered_json{{"success", std::move(success_obj)},
                                  {"default_success", default_success},
                                  {"wander_rate", wander_rate},
                                  {"seed", seed},
                                  {"sources", std::move(sources_obj)}};
  }
};

struct GeneratedSession {
  CleanedLog log;
  SessionSummary truth;  // what a perfect summarizer would produce
};

namespace detail {

inline bool scene_uses_action(const Scene& scene) {
  static const char* verbs[] = {"Collect", "Find", "Visit", "Get", "Read",
                                "Disable", "Locate", "Take", "Solve"};
  for (const char* v : verbs)
    if (scene.title.rfind(v, 0) == 0) return true;
  return false;
}

inline std::string fail_synopsis(const Scene& scene, uint32_t variant) {
  switch (variant % 3) {
    case 0: return "Player attempts '" + scene.title + "' but fails.";
    case 1: return "Player works toward '" + scene.title + "' but nothing happens.";
    default:
      return "Player asks around about '" + scene.title + "' without a useful answer.";
  }
}

inline std::string success_synopsis(const Scene& scene) {
  return "Player completes '" + scene.title + "'.";
}

inline std::string wander_synopsis() {
  return "Player wanders around the village without clear progress.";
}

}  // namespace detail

// Simulates one player walking the graph: at each step attempt one scene with
// every prerequisite group satisfied, or wander. Knowledge (completed scenes,
// sources) survives round resets; the session ends when the terminal scene
// completes or the step budget runs out.
inline GeneratedSession generate_session(const LogicGraph& graph,
                                         const PlayerPolicy& policy, int rounds,
                                         int steps_per_round,
                                         const std::string& session_id,
                                         uint64_t session_seed = 0) {
  if (rounds < 1) throw ConfigError("rounds must be at least 1");
  if (steps_per_round < 1) throw ConfigError("steps per round must be at least 1");
  Rng rng(policy.seed ^ (session_seed * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull));

  GeneratedSession out;
  out.log.session_id = session_id;
  out.log.intro = "-= Village =-\n\nYou wake up at home with a sense of deja vu.";
  out.log.reset_markers.push_back(0);
  out.truth.session_id = session_id;
  out.truth.sources = initial_sources(graph);

  std::set<SceneId> completed;
  int total = 0;
  bool solved = false;
  for (int round = 0; round < rounds && !solved; ++round) {
    if (round > 0) out.log.reset_markers.push_back(total);
    for (int in_round = 1; in_round <= steps_per_round; ++in_round) {
      ++total;
      std::vector<const Scene*> candidates;
      for (const Scene& scene : graph.scenes()) {
        if (completed.count(scene.id)) continue;
        bool eligible = true;
        for (const PrereqGroup& group : graph.prerequisites(scene.id)) {
          bool satisfied = false;
          for (const SceneId& tail : group.tails)
            if (completed.count(tail)) satisfied = true;
          if (!satisfied) { eligible = false; break; }
        }
        if (eligible) candidates.push_back(&scene);
      }

      bool wander = candidates.empty() || rng.uniform() < policy.wander_rate;
      if (candidates.empty() && policy.wander_rate <= 0.0 && !solved)
        throw ValidationError("generation deadlock: no attemptable scene and wander rate 0");

      GameStep step;
      step.step_in_round = in_round;
      step.step_total = total;
      StepSummary summary;
      summary.step_in_round = in_round;
      summary.step_total = total;

      if (wander) {
        step.player_payload = make_player_payload("look around", std::nullopt, {});
        step.textworld = "You wander around the village.";
        step.location = "village";
        summary.is_action = true;
        summary.synopsis = detail::wander_synopsis();
        summary.success = true;
        summary.helpful = false;
      } else {
        const Scene& scene = *candidates[rng.below(static_cast<uint32_t>(candidates.size()))];
        bool use_action = detail::scene_uses_action(scene);
        if (use_action)
          step.player_payload =
              make_player_payload("work toward '" + scene.title + "'", std::nullopt, {});
        else
          step.player_payload = make_player_payload(
              std::nullopt, "Can you help me with '" + scene.title + "'?", {});
        step.location = "village";
        summary.is_action = use_action;
        summary.mapped_scenes = {scene.id};

        bool succeeded = rng.uniform() < policy.success_for(scene.id);
        if (succeeded) {
          step.textworld = "You make progress: " + scene.title + ".";
          summary.synopsis = detail::success_synopsis(scene);
          summary.success = true;
          summary.helpful = true;
          summary.newly_completed = {{scene.id, total}};
          completed.insert(scene.id);
          out.truth.completed.push_back({scene.id, total});
          for (auto& [fact, value] : out.truth.sources) {
            auto rule = policy.sources.find(fact);
            if (rule != policy.sources.end() && rule->second.scene == scene.id) {
              value = rule->second.provider;
              step.npc_utterances.push_back(
                  {rule->second.provider, "Here is what you need to know."});
            }
          }
          if (scene.id == graph.terminal()) solved = true;
        } else {
          step.textworld = "Nothing happens.";
          summary.synopsis = detail::fail_synopsis(scene, static_cast<uint32_t>(rng.below(3)));
          summary.success = false;
          summary.helpful = false;
        }
      }
      out.log.steps.push_back(std::move(step));
      out.truth.steps.push_back(std::move(summary));
      if (solved) break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force legality oracle. Decides by direct recursive simulation of the
// prerequisite semantics; deliberately shares no helper code with
// LogicGraph::check_completion_legal.

inline bool brute_force_legal(const LogicGraph& graph,
                              const std::vector<Completion>& sequence) {
  if (graph.scenes().size() > 12)
    throw ValidationError("brute-force oracle is bounded to 12 scenes");
  for (const Completion& c : sequence)
    if (!graph.has_scene(c.scene))
      throw ValidationError("unknown scene id '" + c.scene + "' in sequence");
  if (sequence.empty()) return true;

  // A sequence is legal iff its prefix is legal and the last completion is
  // admissible given exactly the scenes completed in the prefix.
  std::vector<Completion> prefix(sequence.begin(), sequence.end() - 1);
  if (!brute_force_legal(graph, prefix)) return false;

  const Completion& last = sequence.back();
  if (!prefix.empty() && last.step_total < prefix.back().step_total) return false;
  for (const Completion& earlier : prefix)
    if (earlier.scene == last.scene) return false;
  for (const PrereqGroup& group : graph.prereq_groups()) {
    if (group.head != last.scene) continue;
    bool satisfied = false;
    for (const SceneId& tail : group.tails)
      for (const Completion& earlier : prefix)
        if (earlier.scene == tail) satisfied = true;
    if (!satisfied) return false;
  }
  return true;
}

// Completion table by direct counting, independent of analyzer code paths.
inline std::vector<SceneStats> oracle_stats(const std::vector<SessionSummary>& truths,
                                            const LogicGraph& graph) {
  if (truths.empty()) throw ValidationError("oracle needs at least one ground truth");
  std::vector<SceneStats> table;
  for (const SceneId& id : graph.report_order()) {
    SceneStats row;
    row.id = id;
    row.players_total = static_cast<int>(truths.size());
    for (const SessionSummary& truth : truths) {
      bool found = false;
      int at_step = 0;
      for (const Completion& c : truth.completed)
        if (!found && c.scene == id) {
          found = true;
          at_step = c.step_total;
        }
      if (found) {
        row.players_completed += 1;
        row.completion_steps.push_back(at_step);
      }
      for (const StepSummary& s : truth.steps)
        for (const SceneId& m : s.mapped_scenes)
          if (m == id) row.attempt_steps += 1;
    }
    row.completion_rate = static_cast<double>(row.players_completed) /
                          static_cast<double>(row.players_total);
    table.push_back(std::move(row));
  }
  return table;
}

// Independent application of the flag rules, used to stage cluster replies
// for scripted runs and to cross-check the analyzer.
inline std::vector<SceneId> oracle_flagged_scenes(const std::vector<SceneStats>& stats,
                                                  const LogicGraph& graph,
                                                  const FlagConfig& config) {
  std::map<SceneId, double> rate;
  for (const SceneStats& row : stats) rate[row.id] = row.completion_rate;
  std::vector<SceneId> flagged;
  for (const SceneStats& row : stats) {
    bool flag = row.completion_rate < config.tau_low;
    double best_tail = -1.0;
    for (const PrereqGroup& group : graph.prerequisites(row.id))
      for (const SceneId& tail : group.tails)
        if (graph.scene(tail).scenario_id == graph.scene(row.id).scenario_id)
          best_tail = std::max(best_tail, rate.at(tail));
    if (best_tail >= 0 && row.completion_rate < config.drop_ratio * best_tail) flag = true;
    if (config.tau_high && row.completion_rate > *config.tau_high) flag = true;
    if (flag) flagged.push_back(row.id);
  }
  return flagged;
}

// ---------------------------------------------------------------------------
// Scripted-reply staging: renders the ground truth as the exact reply
// sequence a perfect summarizer (and a perfect grouping model) would return
// for a pipeline run over the generated cohort.

inline std::vector<std::string> script_for_session(const LogicGraph& graph,
                                                   const GeneratedSession& generated,
                                                   int window,
                                                   const PlayerPolicy& policy) {
  // fact -> (reveal step, provider): a fact becomes known when its revealing
  // scene completes.
  std::map<std::string, std::pair<int, std::string>> reveals;
  for (const auto& [fact, rule] : policy.sources)
    for (const Completion& c : generated.truth.completed)
      if (c.scene == rule.scene) reveals[fact] = {c.step_total, rule.provider};

  std::vector<std::string> replies;
  size_t cursor = 0;
  std::vector<Completion> completed_so_far;
  for (const Section& section : segment(generated.log, window)) {
    ParsedReply reply;
    for (size_t i = 0; i < section.steps.size(); ++i, ++cursor) {
      const StepSummary& s = generated.truth.steps.at(cursor);
      reply.steps.push_back(s);
      for (const Completion& c : s.newly_completed) completed_so_far.push_back(c);
    }
    for (const std::string& fact : graph.tracked_sources()) {
      auto it = reveals.find(fact);
      bool known = it != reveals.end() && it->second.first <= section.last_step_total;
      reply.sources.emplace_back(fact, known ? it->second.second : "NA");
    }
    reply.completed = completed_so_far;
    replies.push_back(render_canonical_reply(reply));
  }
  return replies;
}

// Groups identical synopses, labeled by the shared sentence; the scripted
// stand-in for a perfect grouping model.
inline std::string perfect_grouping_reply(const std::vector<SynopsisItem>& items) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < items.size(); ++i) {
    if (!groups.count(items[i].text)) order.push_back(items[i].text);
    groups[items[i].text].push_back(i + 1);
  }
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const std::string& text : order)
    arr.push_back({{"label", text}, {"members", groups[text]}});
  return arr.dump();
}

}  // namespace painpoint
