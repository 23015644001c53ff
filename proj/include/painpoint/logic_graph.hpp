#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "painpoint/detail/text.hpp"
#include "painpoint/errors.hpp"

namespace painpoint {

using SceneId = std::string;

// A (scene, cumulative step) pair recording when a scene's goal was achieved.
struct Completion {
  SceneId scene;
  int step_total = 0;
  bool operator==(const Completion&) const = default;
};

struct Scene {
  SceneId id;
  std::string title;
  std::string scenario_id;
  std::string unlocks;  // annotation only, no ordering effect
  bool terminal = false;
  bool operator==(const Scene&) const = default;
};

struct Scenario {
  std::string id;
  std::string title;
  std::vector<SceneId> member_scenes;  // declaration order
  bool operator==(const Scenario&) const = default;
};

// One requirement on a head scene. Completing ANY tail satisfies the group;
// a head with several groups needs every group satisfied.
struct PrereqGroup {
  SceneId head;
  std::vector<SceneId> tails;
  bool operator==(const PrereqGroup&) const = default;
};

struct LegalityResult {
  bool legal = true;
  std::string violation;  // empty when legal; names the first violated condition
};

class LogicGraph;

class GraphBuilder {
 public:
  GraphBuilder& add_scenario(std::string id, std::string title) {
    scenarios_.push_back({std::move(id), std::move(title), {}});
    return *this;
  }
  GraphBuilder& add_scene(std::string id, std::string title, std::string scenario_id,
                          std::string unlocks = "", bool terminal = false) {
    scenes_.push_back({std::move(id), std::move(title), std::move(scenario_id),
                       std::move(unlocks), terminal});
    return *this;
  }
  GraphBuilder& add_requirement(SceneId head, std::vector<SceneId> tails) {
    groups_.push_back({std::move(head), std::move(tails)});
    return *this;
  }
  GraphBuilder& add_source(std::string fact) {
    sources_.push_back(std::move(fact));
    return *this;
  }

  LogicGraph build() const;

 private:
  friend class LogicGraph;
  std::vector<Scenario> scenarios_;
  std::vector<Scene> scenes_;
  std::vector<PrereqGroup> groups_;
  std::vector<std::string> sources_;
};

// Immutable after construction; safe to share across threads.
class LogicGraph {
 public:
  static LogicGraph parse(std::string_view text);

  const std::vector<Scenario>& scenarios() const { return scenarios_; }
  const std::vector<Scene>& scenes() const { return scenes_; }
  const std::vector<PrereqGroup>& prereq_groups() const { return groups_; }
  const std::vector<std::string>& tracked_sources() const { return sources_; }
  const SceneId& terminal() const { return terminal_; }

  bool has_scene(const SceneId& id) const { return scene_index_.count(id) > 0; }

  const Scene& scene(const SceneId& id) const {
    auto it = scene_index_.find(id);
    if (it == scene_index_.end())
      throw ValidationError("unknown scene id '" + id + "'");
    return scenes_[it->second];
  }

  const Scenario& scenario(const std::string& id) const {
    auto it = scenario_index_.find(id);
    if (it == scenario_index_.end())
      throw ValidationError("unknown scenario id '" + id + "'");
    return scenarios_[it->second];
  }

  // All groups whose head is `id`; empty for root scenes.
  std::vector<PrereqGroup> prerequisites(const SceneId& id) const {
    scene(id);  // unknown-id check
    std::vector<PrereqGroup> out;
    auto it = groups_by_head_.find(id);
    if (it != groups_by_head_.end())
      for (size_t gi : it->second) out.push_back(groups_[gi]);
    return out;
  }

  bool is_root(const SceneId& id) const {
    scene(id);
    return groups_by_head_.find(id) == groups_by_head_.end();
  }

  // Deterministic: ties broken by declaration order.
  const std::vector<SceneId>& topological_order() const { return topo_order_; }

  // Scenario declaration order, scenes within a scenario in topological order.
  const std::vector<SceneId>& report_order() const { return report_order_; }

  // Legality of an ordered completion sequence: step numbers non-decreasing,
  // no scene completed twice, and every prerequisite group of each completion
  // has a tail at an earlier position. Unknown ids throw.
  LegalityResult check_completion_legal(std::span<const Completion> sequence) const {
    std::unordered_set<std::string> done;
    int prev_step = 0;
    bool have_prev = false;
    for (const Completion& c : sequence) {
      scene(c.scene);
      if (have_prev && c.step_total < prev_step)
        return {false, "step numbers decrease at (" + c.scene + "," +
                           std::to_string(c.step_total) + ")"};
      prev_step = c.step_total;
      have_prev = true;
      if (done.count(c.scene))
        return {false, "scene " + c.scene + " completed twice"};
      auto it = groups_by_head_.find(c.scene);
      if (it != groups_by_head_.end()) {
        for (size_t gi : it->second) {
          const PrereqGroup& g = groups_[gi];
          bool satisfied = false;
          for (const SceneId& tail : g.tails)
            if (done.count(tail)) { satisfied = true; break; }
          if (!satisfied) {
            std::string tails;
            for (size_t i = 0; i < g.tails.size(); ++i)
              tails += (i ? "|" : "") + g.tails[i];
            return {false, "scene " + c.scene +
                               " completed before prerequisite group {" + tails + "}"};
          }
        }
      }
      done.insert(c.scene);
    }
    return {true, ""};
  }

  // Canonical graph-spec text; parse(render()) reproduces this graph.
  std::string render() const {
    std::string out;
    for (const Scenario& sc : scenarios_)
      out += "scenario " + sc.id + " " + quote(sc.title) + "\n";
    for (const Scene& s : scenes_) {
      out += "scene " + s.id + " " + quote(s.title) + " in " + s.scenario_id;
      if (!s.unlocks.empty()) out += " unlocks " + quote(s.unlocks);
      if (s.terminal) out += " terminal";
      out += "\n";
    }
    for (const PrereqGroup& g : groups_) {
      out += "require " + g.head + " <- ";
      for (size_t i = 0; i < g.tails.size(); ++i) out += (i ? "|" : "") + g.tails[i];
      out += "\n";
    }
    for (const std::string& f : sources_) out += "source " + quote(f) + "\n";
    return out;
  }

  // Compact listing for LLM prompts.
  std::string render_for_prompt() const {
    std::string out = "Game logic:\n";
    for (const Scenario& sc : scenarios_) {
      out += "Scenario " + sc.id + ": " + sc.title + "\n";
      for (const SceneId& sid : sc.member_scenes) {
        const Scene& s = scene(sid);
        out += "  Scene " + s.id + ": " + s.title;
        auto groups = groups_by_head_.find(sid);
        if (groups != groups_by_head_.end()) {
          out += " (requires ";
          bool first_group = true;
          for (size_t gi : groups->second) {
            if (!first_group) out += " and ";
            first_group = false;
            const PrereqGroup& g = groups_[gi];
            for (size_t i = 0; i < g.tails.size(); ++i)
              out += (i ? " or " : "") + g.tails[i];
          }
          out += ")";
        }
        if (!s.unlocks.empty()) out += " (unlocks: " + s.unlocks + ")";
        if (s.terminal) out += " [goal]";
        out += "\n";
      }
    }
    out += "Tracked sources: ";
    for (size_t i = 0; i < sources_.size(); ++i) out += (i ? ", " : "") + sources_[i];
    out += "\n";
    return out;
  }

  bool operator==(const LogicGraph& other) const {
    return scenes_ == other.scenes_ && scenarios_ == other.scenarios_ &&
           groups_ == other.groups_ && sources_ == other.sources_ &&
           terminal_ == other.terminal_;
  }

 private:
  friend class GraphBuilder;
  LogicGraph() = default;

  static std::string quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    out += '"';
    return out;
  }

  std::vector<Scenario> scenarios_;
  std::vector<Scene> scenes_;
  std::vector<PrereqGroup> groups_;
  std::vector<std::string> sources_;
  SceneId terminal_;
  std::unordered_map<std::string, size_t> scene_index_;
  std::unordered_map<std::string, size_t> scenario_index_;
  std::unordered_map<std::string, std::vector<size_t>> groups_by_head_;
  std::vector<SceneId> topo_order_;
  std::vector<SceneId> report_order_;
};

inline LogicGraph GraphBuilder::build() const {
  LogicGraph g;
  g.scenarios_ = scenarios_;
  g.scenes_ = scenes_;
  g.sources_ = sources_;

  for (size_t i = 0; i < g.scenarios_.size(); ++i) {
    const Scenario& sc = g.scenarios_[i];
    if (sc.id.empty() || detail::contains_whitespace(sc.id))
      throw ValidationError("invalid scenario id '" + sc.id + "'");
    if (sc.title.empty())
      throw ValidationError("scenario " + sc.id + " has an empty title");
    if (!g.scenario_index_.emplace(sc.id, i).second)
      throw ValidationError("duplicate scenario id '" + sc.id + "'");
    g.scenarios_[i].member_scenes.clear();
  }

  if (g.scenes_.empty()) throw ValidationError("graph declares no scenes");
  for (size_t i = 0; i < g.scenes_.size(); ++i) {
    const Scene& s = g.scenes_[i];
    if (s.id.empty() || detail::contains_whitespace(s.id) ||
        s.id.find_first_of("\"|#") != std::string::npos)
      throw ValidationError("invalid scene id '" + s.id + "'");
    if (s.title.empty()) throw ValidationError("scene " + s.id + " has an empty title");
    if (!g.scene_index_.emplace(s.id, i).second)
      throw ValidationError("duplicate scene id '" + s.id + "'");
    auto sc = g.scenario_index_.find(s.scenario_id);
    if (sc == g.scenario_index_.end())
      throw ValidationError("scene " + s.id + " references undeclared scenario '" +
                            s.scenario_id + "'");
    g.scenarios_[sc->second].member_scenes.push_back(s.id);
    if (s.terminal) {
      if (!g.terminal_.empty())
        throw ValidationError("more than one terminal scene (" + g.terminal_ + ", " +
                              s.id + ")");
      g.terminal_ = s.id;
    }
  }
  if (g.terminal_.empty()) throw ValidationError("no terminal scene designated");
  for (const Scenario& sc : g.scenarios_)
    if (sc.member_scenes.empty())
      throw ValidationError("scenario " + sc.id + " has no scenes");

  for (const std::string& f : g.sources_)
    if (f.empty()) throw ValidationError("empty source fact name");

  g.groups_.reserve(groups_.size());
  for (const PrereqGroup& raw : groups_) {
    if (!g.scene_index_.count(raw.head))
      throw ValidationError("requirement references unknown scene '" + raw.head + "'");
    if (raw.tails.empty())
      throw ValidationError("requirement on " + raw.head + " has no tails");
    PrereqGroup group{raw.head, {}};
    std::set<SceneId> seen;
    for (const SceneId& tail : raw.tails) {
      if (!g.scene_index_.count(tail))
        throw ValidationError("requirement on " + raw.head +
                              " references unknown scene '" + tail + "'");
      if (tail == raw.head)
        throw ValidationError("scene " + raw.head + " requires itself");
      if (seen.insert(tail).second) group.tails.push_back(tail);
    }
    g.groups_by_head_[group.head].push_back(g.groups_.size());
    g.groups_.push_back(std::move(group));
  }

  // Kahn with declaration-order tie breaking; leftovers indicate a cycle.
  std::vector<int> indegree(g.scenes_.size(), 0);
  std::vector<std::vector<size_t>> heads_of(g.scenes_.size());
  for (const PrereqGroup& grp : g.groups_) {
    size_t head = g.scene_index_.at(grp.head);
    for (const SceneId& tail : grp.tails) {
      indegree[head] += 1;
      heads_of[g.scene_index_.at(tail)].push_back(head);
    }
  }
  std::set<size_t> ready;
  for (size_t i = 0; i < g.scenes_.size(); ++i)
    if (indegree[i] == 0) ready.insert(i);
  while (!ready.empty()) {
    size_t i = *ready.begin();
    ready.erase(ready.begin());
    g.topo_order_.push_back(g.scenes_[i].id);
    for (size_t head : heads_of[i])
      if (--indegree[head] == 0) ready.insert(head);
  }
  if (g.topo_order_.size() != g.scenes_.size()) {
    std::string stuck;
    for (size_t i = 0; i < g.scenes_.size(); ++i)
      if (indegree[i] > 0) stuck += (stuck.empty() ? "" : ", ") + g.scenes_[i].id;
    throw ValidationError("prerequisite cycle involving: " + stuck);
  }

  std::unordered_map<std::string, size_t> topo_rank;
  for (size_t i = 0; i < g.topo_order_.size(); ++i) topo_rank[g.topo_order_[i]] = i;
  for (const Scenario& sc : g.scenarios_) {
    std::vector<SceneId> members = sc.member_scenes;
    std::stable_sort(members.begin(), members.end(),
                     [&](const SceneId& a, const SceneId& b) {
                       return topo_rank.at(a) < topo_rank.at(b);
                     });
    for (SceneId& id : members) g.report_order_.push_back(std::move(id));
  }
  return g;
}

namespace detail {

struct GraphLineLexer {
  std::string_view line;
  int line_no;
  size_t pos = 0;

  int column() const { return static_cast<int>(pos) + 1; }

  void skip_spaces() {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
  }

  bool at_end() {
    skip_spaces();
    return pos >= line.size() || line[pos] == '#';
  }

  std::string word(const char* what) {
    skip_spaces();
    if (at_end()) throw GraphSyntaxError(line_no, column(), std::string("expected ") + what);
    size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' && line[pos] != '#')
      ++pos;
    return std::string(line.substr(start, pos - start));
  }

  std::string quoted(const char* what) {
    skip_spaces();
    if (pos >= line.size() || line[pos] != '"')
      throw GraphSyntaxError(line_no, column(), std::string("expected quoted ") + what);
    ++pos;
    std::string out;
    while (pos < line.size()) {
      char c = line[pos++];
      if (c == '\\' && pos < line.size()) {
        out += line[pos++];
      } else if (c == '"') {
        return out;
      } else {
        out += c;
      }
    }
    throw GraphSyntaxError(line_no, column(), "unterminated string");
  }
};

}  // namespace detail

inline LogicGraph LogicGraph::parse(std::string_view text) {
  GraphBuilder builder;
  auto lines = detail::split_lines(text);
  for (size_t li = 0; li < lines.size(); ++li) {
    detail::GraphLineLexer lex{lines[li], static_cast<int>(li) + 1};
    if (lex.at_end()) continue;
    std::string directive = lex.word("directive");
    if (directive == "scenario") {
      std::string id = lex.word("scenario id");
      std::string title = lex.quoted("title");
      builder.add_scenario(id, title);
    } else if (directive == "scene") {
      std::string id = lex.word("scene id");
      std::string title = lex.quoted("title");
      std::string kw = lex.word("'in'");
      if (kw != "in")
        throw GraphSyntaxError(lex.line_no, lex.column(), "expected 'in', got '" + kw + "'");
      std::string scenario_id = lex.word("scenario id");
      std::string unlocks;
      bool terminal = false;
      while (!lex.at_end()) {
        std::string opt = lex.word("scene option");
        if (opt == "unlocks") {
          unlocks = lex.quoted("unlocks text");
        } else if (opt == "terminal") {
          terminal = true;
        } else {
          throw GraphSyntaxError(lex.line_no, lex.column(),
                                 "unknown scene option '" + opt + "'");
        }
      }
      builder.add_scene(id, title, scenario_id, unlocks, terminal);
    } else if (directive == "require") {
      std::string head = lex.word("head scene id");
      std::string arrow = lex.word("'<-'");
      if (arrow != "<-")
        throw GraphSyntaxError(lex.line_no, lex.column(), "expected '<-', got '" + arrow + "'");
      std::string tail_expr = lex.word("tail list");
      std::vector<SceneId> tails;
      for (std::string_view part : detail::split(tail_expr, '|')) {
        auto t = detail::trim(part);
        if (t.empty())
          throw GraphSyntaxError(lex.line_no, lex.column(), "empty tail in requirement");
        tails.emplace_back(t);
      }
      builder.add_requirement(head, std::move(tails));
      if (!lex.at_end())
        throw GraphSyntaxError(lex.line_no, lex.column(), "trailing text after requirement");
    } else if (directive == "source") {
      builder.add_source(lex.quoted("fact name"));
    } else {
      throw GraphSyntaxError(lex.line_no, 1, "unknown directive '" + directive + "'");
    }
  }
  return builder.build();
}

}  // namespace painpoint
