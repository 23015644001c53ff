#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "painpoint/detail/text.hpp"
#include "painpoint/errors.hpp"
#include "painpoint/logic_graph.hpp"

namespace painpoint {

// Stage-1 structured record for one gameplay step.
struct StepSummary {
  int step_in_round = 0;
  int step_total = 0;
  bool is_action = true;  // action vs speech
  std::string synopsis;
  bool success = false;
  std::vector<SceneId> mapped_scenes;
  bool helpful = false;
  std::vector<Completion> newly_completed;
  bool operator==(const StepSummary&) const = default;
};

// Ordered fact -> provider pairs; "NA" until a provider is learned.
using SourceMap = std::vector<std::pair<std::string, std::string>>;

struct ParsedReply {
  std::vector<StepSummary> steps;
  SourceMap sources;
  std::vector<Completion> completed;  // cumulative, as echoed by the model
  bool operator==(const ParsedReply&) const = default;
};

struct SessionSummary {
  std::string session_id;
  std::vector<StepSummary> steps;
  std::vector<Completion> completed;  // final ordered completion list
  SourceMap sources;
  // Inclusive step_total ranges whose sections had to be left unmapped.
  std::vector<std::pair<int, int>> degraded_sections;
};

inline SourceMap initial_sources(const LogicGraph& graph) {
  SourceMap m;
  for (const std::string& fact : graph.tracked_sources()) m.emplace_back(fact, "NA");
  return m;
}

// "[(A1,2), (A2,15)]" with "[]" for empty — the context-header notation.
inline std::string format_completed(const std::vector<Completion>& completed) {
  std::string out = "[";
  for (size_t i = 0; i < completed.size(); ++i) {
    if (i) out += ", ";
    out += "(" + completed[i].scene + "," + std::to_string(completed[i].step_total) + ")";
  }
  out += "]";
  return out;
}

inline std::string format_sources(const SourceMap& sources) {
  std::string out = "[";
  for (size_t i = 0; i < sources.size(); ++i) {
    if (i) out += ", ";
    out += sources[i].first + " - " + sources[i].second;
  }
  out += "]";
  return out;
}

// ---------------------------------------------------------------------------
// Reply parsing. Accepts the strict JSON document produced by
// render_canonical_reply as well as the relaxed notation the model emits
// (unquoted keys and synopses, True/False, (A1,2) tuples).

namespace detail {

inline void require_field(bool present, const char* name) {
  if (!present)
    throw SummaryParseError(ReplyFault::missing_field,
                            std::string("summary record is missing field '") + name + "'");
}

inline void check_scene_known(const LogicGraph& graph, const SceneId& id) {
  if (!graph.has_scene(id))
    throw SummaryParseError(ReplyFault::unknown_scene,
                            "summary references scene '" + id + "' not in the logic graph");
}

inline void check_synopsis(const std::string& synopsis) {
  auto t = trim(synopsis);
  if (t.empty())
    throw SummaryParseError(ReplyFault::missing_field, "empty synopsis");
  char last = t.back();
  if (last != '.' && last != '!' && last != '?')
    throw SummaryParseError(ReplyFault::malformed,
                            "synopsis must be one sentence ending with a sentence mark: '" +
                                std::string(t) + "'");
}

// Scans relaxed text tracking bracket depth; quotes are honored so strict
// JSON passes through the same scanner.
struct RelaxedScanner {
  std::string_view s;
  size_t i = 0;

  void skip_ws() {
    while (i < s.size() && is_space(s[i])) ++i;
  }
  bool eof() {
    skip_ws();
    return i >= s.size();
  }
  char peek() {
    skip_ws();
    return i < s.size() ? s[i] : '\0';
  }
  void expect(char c, const char* context) {
    skip_ws();
    if (i >= s.size() || s[i] != c)
      throw SummaryParseError(ReplyFault::malformed,
                              std::string("expected '") + c + "' " + context);
    ++i;
  }
  bool consume(char c) {
    skip_ws();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
  bool consume_word(std::string_view w) {
    skip_ws();
    if (s.substr(i, w.size()) == w) {
      i += w.size();
      return true;
    }
    return false;
  }

  // Span of balanced content starting at an opening bracket.
  std::string_view balanced(char open, char close, const char* context) {
    expect(open, context);
    size_t start = i;
    int depth = 1;
    char quote = '\0';
    while (i < s.size()) {
      char c = s[i];
      if (quote != '\0') {
        if (c == '\\' && i + 1 < s.size()) ++i;
        else if (c == quote) quote = '\0';
      } else if (c == '"') {
        quote = c;
      } else if (c == '[' || c == '{' || c == '(') {
        ++depth;
      } else if (c == ']' || c == '}' || c == ')') {
        // Only the matching close at depth 1 terminates.
        if (depth == 1 && c == close) {
          std::string_view body = s.substr(start, i - start);
          ++i;
          return body;
        }
        --depth;
        if (depth <= 0)
          throw SummaryParseError(ReplyFault::malformed,
                                  std::string("unbalanced brackets ") + context);
      }
      ++i;
    }
    throw SummaryParseError(ReplyFault::malformed,
                            std::string("unterminated bracket ") + context);
  }
};

// Splits bracketed content on top-level commas.
inline std::vector<std::string_view> split_top_level(std::string_view body) {
  std::vector<std::string_view> parts;
  if (trim(body).empty()) return parts;
  int depth = 0;
  char quote = '\0';
  size_t start = 0;
  for (size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (quote != '\0') {
      if (c == '\\' && i + 1 < body.size()) ++i;
      else if (c == quote) quote = '\0';
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '[' || c == '{' || c == '(') {
      ++depth;
    } else if (c == ']' || c == '}' || c == ')') {
      --depth;
    } else if (c == ',' && depth == 0) {
      parts.push_back(body.substr(start, i - start));
      start = i + 1;
    }
  }
  parts.push_back(body.substr(start));
  return parts;
}

inline std::string unquote(std::string_view raw) {
  auto t = trim(raw);
  if (t.size() >= 2 && (t.front() == '"' || t.front() == '\'') && t.back() == t.front()) {
    std::string out;
    for (size_t i = 1; i + 1 < t.size(); ++i) {
      if (t[i] == '\\' && i + 2 < t.size()) ++i;
      out += t[i];
    }
    return out;
  }
  return std::string(t);
}

inline int parse_int_value(std::string_view raw, const char* field) {
  auto t = trim(raw);
  if (t.empty() || !all_digits(t))
    throw SummaryParseError(ReplyFault::malformed,
                            std::string("field '") + field + "' is not a number: '" +
                                std::string(t) + "'");
  return std::stoi(std::string(t));
}

inline bool parse_bool_value(std::string_view raw, const char* field) {
  auto t = trim(raw);
  if (t == "True" || t == "true") return true;
  if (t == "False" || t == "false") return false;
  throw SummaryParseError(ReplyFault::malformed,
                          std::string("field '") + field + "' is not a boolean: '" +
                              std::string(t) + "'");
}

inline std::vector<SceneId> parse_scene_list(std::string_view body, const LogicGraph& graph) {
  std::vector<SceneId> out;
  for (std::string_view part : split_top_level(body)) {
    if (trim(part).empty()) continue;
    SceneId id = unquote(part);
    check_scene_known(graph, id);
    out.push_back(std::move(id));
  }
  return out;
}

inline std::vector<Completion> parse_completion_list(std::string_view body,
                                                     const LogicGraph& graph) {
  std::vector<Completion> out;
  for (std::string_view part : split_top_level(body)) {
    auto t = trim(part);
    if (t.empty()) continue;
    if (t.size() < 2 || (t.front() != '(' && t.front() != '[') ||
        (t.back() != ')' && t.back() != ']'))
      throw SummaryParseError(ReplyFault::malformed,
                              "malformed completion tuple: '" + std::string(t) + "'");
    auto inner = t.substr(1, t.size() - 2);
    auto pieces = split_top_level(inner);
    if (pieces.size() != 2)
      throw SummaryParseError(ReplyFault::malformed,
                              "completion tuple needs (scene, step): '" + std::string(t) + "'");
    Completion c;
    c.scene = unquote(pieces[0]);
    check_scene_known(graph, c.scene);
    c.step_total = parse_int_value(pieces[1], "completed step");
    out.push_back(std::move(c));
  }
  return out;
}

// Record keys the relaxed grammar knows about. A synopsis value runs until
// the next top-level comma that introduces one of these keys.
inline const std::vector<std::string_view>& known_record_keys() {
  static const std::vector<std::string_view> keys = {
      "step", "total", "action", "synopsis", "success",
      "node", "scenes", "helpful", "completed nodes", "completed"};
  return keys;
}

inline std::optional<std::string> match_key_at(std::string_view body, size_t pos) {
  for (std::string_view key : known_record_keys()) {
    size_t i = pos;
    if (i < body.size() && (body[i] == '"' || body[i] == '\'')) ++i;
    if (body.substr(i, key.size()) != key) continue;
    size_t j = i + key.size();
    if (j < body.size() && (body[j] == '"' || body[j] == '\'')) ++j;
    while (j < body.size() && is_space(body[j])) ++j;
    if (j < body.size() && body[j] == ':') return std::string(key);
  }
  return std::nullopt;
}

inline StepSummary parse_relaxed_record(std::string_view body, const LogicGraph& graph) {
  StepSummary rec;
  bool has_step = false, has_total = false, has_action = false, has_synopsis = false,
       has_success = false, has_scenes = false, has_helpful = false, has_completed = false;
  size_t i = 0;
  while (true) {
    while (i < body.size() && (is_space(body[i]) || body[i] == ',')) ++i;
    if (i >= body.size()) break;
    auto key = match_key_at(body, i);
    if (!key)
      throw SummaryParseError(ReplyFault::malformed,
                              "unknown field near '" +
                                  std::string(trim(body.substr(i, 24))) + "'");
    size_t colon = body.find(':', i);
    i = colon + 1;
    while (i < body.size() && is_space(body[i])) ++i;

    // Value extent: to the next top-level comma that starts a known key, or
    // end of record. Bracketed values consume their balanced span.
    size_t value_start = i;
    size_t value_end = body.size();
    int depth = 0;
    char quote = '\0';
    for (size_t j = i; j < body.size(); ++j) {
      char c = body[j];
      if (quote != '\0') {
        if (c == '\\' && j + 1 < body.size()) ++j;
        else if (c == quote) quote = '\0';
      } else if (c == '"' || (c == '\'' && depth > 0)) {
        quote = c;
      } else if (c == '[' || c == '{' || c == '(') {
        ++depth;
      } else if (c == ']' || c == '}' || c == ')') {
        --depth;
      } else if (c == ',' && depth == 0) {
        size_t k = j + 1;
        while (k < body.size() && is_space(body[k])) ++k;
        if (match_key_at(body, k)) {
          value_end = j;
          break;
        }
      }
    }
    std::string_view raw = body.substr(value_start, value_end - value_start);
    i = value_end;

    if (*key == "step") {
      rec.step_in_round = parse_int_value(raw, "step");
      has_step = true;
    } else if (*key == "total") {
      rec.step_total = parse_int_value(raw, "total");
      has_total = true;
    } else if (*key == "action") {
      rec.is_action = parse_bool_value(raw, "action");
      has_action = true;
    } else if (*key == "synopsis") {
      rec.synopsis = unquote(raw);
      has_synopsis = true;
    } else if (*key == "success") {
      rec.success = parse_bool_value(raw, "success");
      has_success = true;
    } else if (*key == "node" || *key == "scenes") {
      auto t = trim(raw);
      if (t.size() < 2 || t.front() != '[' || t.back() != ']')
        throw SummaryParseError(ReplyFault::malformed,
                                "scene list must be bracketed: '" + std::string(t) + "'");
      rec.mapped_scenes = parse_scene_list(t.substr(1, t.size() - 2), graph);
      has_scenes = true;
    } else if (*key == "helpful") {
      rec.helpful = parse_bool_value(raw, "helpful");
      has_helpful = true;
    } else {  // completed nodes / completed
      auto t = trim(raw);
      if (t.size() < 2 || t.front() != '[' || t.back() != ']')
        throw SummaryParseError(ReplyFault::malformed,
                                "completed list must be bracketed: '" + std::string(t) + "'");
      rec.newly_completed = parse_completion_list(t.substr(1, t.size() - 2), graph);
      has_completed = true;
    }
  }
  require_field(has_step, "step");
  require_field(has_total, "total");
  require_field(has_action, "action");
  require_field(has_synopsis, "synopsis");
  require_field(has_success, "success");
  require_field(has_scenes, "node");
  require_field(has_helpful, "helpful");
  require_field(has_completed, "completed nodes");
  check_synopsis(rec.synopsis);
  for (const SceneId& id : rec.mapped_scenes) check_scene_known(graph, id);
  return rec;
}

inline ParsedReply parse_relaxed_reply(std::string_view text, const LogicGraph& graph) {
  RelaxedScanner scan{text};
  std::string_view records_body = scan.balanced('[', ']', "at start of reply");
  ParsedReply reply;
  {
    RelaxedScanner records{records_body};
    while (!records.eof()) {
      records.consume(',');
      if (records.eof()) break;
      std::string_view record_body = records.balanced('{', '}', "around a step record");
      reply.steps.push_back(parse_relaxed_record(record_body, graph));
    }
  }
  if (scan.eof() || !scan.consume('+') || !scan.consume_word("sources:"))
    throw SummaryParseError(ReplyFault::missing_field, "reply is missing '+sources:'");
  std::string_view sources_body = scan.balanced('[', ']', "around sources");
  const auto& facts = graph.tracked_sources();
  std::vector<std::string> values;
  for (std::string_view part : split_top_level(sources_body)) {
    std::string v = unquote(part);
    // Tolerate "fact - value" echoes of the context-header form.
    for (const std::string& fact : facts) {
      std::string prefix = fact + " - ";
      if (v.rfind(prefix, 0) == 0) {
        v = v.substr(prefix.size());
        break;
      }
    }
    values.push_back(std::move(v));
  }
  if (values.size() != facts.size())
    throw SummaryParseError(ReplyFault::missing_field,
                            "reply lists " + std::to_string(values.size()) +
                                " sources, graph tracks " + std::to_string(facts.size()));
  for (size_t i = 0; i < facts.size(); ++i) reply.sources.emplace_back(facts[i], values[i]);

  if (scan.eof() || !scan.consume('+') || !scan.consume_word("completed:"))
    throw SummaryParseError(ReplyFault::missing_field, "reply is missing '+completed:'");
  std::string_view completed_body = scan.balanced('[', ']', "around completed list");
  reply.completed = parse_completion_list(completed_body, graph);
  if (!scan.eof())
    throw SummaryParseError(ReplyFault::malformed, "trailing text after completed list");
  return reply;
}

inline ParsedReply parse_strict_reply(const nlohmann::json& doc, const LogicGraph& graph) {
  ParsedReply reply;
  if (!doc.is_object() || !doc.contains("steps") || !doc.contains("sources") ||
      !doc.contains("completed"))
    throw SummaryParseError(ReplyFault::missing_field,
                            "strict reply needs steps, sources and completed");
  for (const auto& item : doc.at("steps")) {
    StepSummary rec;
    require_field(item.contains("step"), "step");
    require_field(item.contains("total"), "total");
    require_field(item.contains("action"), "action");
    require_field(item.contains("synopsis"), "synopsis");
    require_field(item.contains("success"), "success");
    require_field(item.contains("scenes") || item.contains("node"), "node");
    require_field(item.contains("helpful"), "helpful");
    require_field(item.contains("completed"), "completed nodes");
    try {
      rec.step_in_round = item.at("step").get<int>();
      rec.step_total = item.at("total").get<int>();
      rec.is_action = item.at("action").get<bool>();
      rec.synopsis = item.at("synopsis").get<std::string>();
      rec.success = item.at("success").get<bool>();
      rec.helpful = item.at("helpful").get<bool>();
      const auto& scenes = item.contains("scenes") ? item.at("scenes") : item.at("node");
      for (const auto& s : scenes) rec.mapped_scenes.push_back(s.get<std::string>());
      for (const auto& c : item.at("completed")) {
        Completion comp;
        comp.scene = c.at(0).get<std::string>();
        comp.step_total = c.at(1).get<int>();
        rec.newly_completed.push_back(std::move(comp));
      }
    } catch (const nlohmann::json::exception& e) {
      throw SummaryParseError(ReplyFault::malformed,
                              std::string("bad field type in step record: ") + e.what());
    }
    check_synopsis(rec.synopsis);
    for (const SceneId& id : rec.mapped_scenes) check_scene_known(graph, id);
    for (const Completion& c : rec.newly_completed) check_scene_known(graph, c.scene);
    reply.steps.push_back(std::move(rec));
  }
  const auto& facts = graph.tracked_sources();
  const auto& sources = doc.at("sources");
  if (!sources.is_array() || sources.size() != facts.size())
    throw SummaryParseError(ReplyFault::missing_field,
                            "strict reply sources must list every tracked fact");
  for (size_t i = 0; i < facts.size(); ++i) {
    const auto& pair = sources[i];
    std::string fact = pair.at(0).get<std::string>();
    if (fact != facts[i])
      throw SummaryParseError(ReplyFault::malformed,
                              "sources out of order: expected '" + facts[i] + "', got '" +
                                  fact + "'");
    reply.sources.emplace_back(fact, pair.at(1).get<std::string>());
  }
  for (const auto& c : doc.at("completed")) {
    Completion comp;
    comp.scene = c.at(0).get<std::string>();
    check_scene_known(graph, comp.scene);
    comp.step_total = c.at(1).get<int>();
    reply.completed.push_back(std::move(comp));
  }
  return reply;
}

}  // namespace detail

inline ParsedReply parse_summary(std::string_view text, const LogicGraph& graph) {
  auto t = detail::trim(text);
  if (t.empty())
    throw SummaryParseError(ReplyFault::malformed, "empty reply");
  if (t.front() == '{') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(t);
    } catch (const nlohmann::json::exception& e) {
      throw SummaryParseError(ReplyFault::malformed,
                              std::string("invalid strict JSON reply: ") + e.what());
    }
    return detail::parse_strict_reply(doc, graph);
  }
  return detail::parse_relaxed_reply(t, graph);
}

// Canonical strict-JSON rendering; parse_summary inverts it exactly.
inline nlohmann::ordered_json reply_to_json(const ParsedReply& reply) {
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (const StepSummary& s : reply.steps) {
    nlohmann::ordered_json completed = nlohmann::ordered_json::array();
    for (const Completion& c : s.newly_completed)
      completed.push_back({c.scene, c.step_total});
    steps.push_back({{"step", s.step_in_round},
                     {"total", s.step_total},
                     {"action", s.is_action},
                     {"synopsis", s.synopsis},
                     {"success", s.success},
                     {"scenes", s.mapped_scenes},
                     {"helpful", s.helpful},
                     {"completed", std::move(completed)}});
  }
  nlohmann::ordered_json sources = nlohmann::ordered_json::array();
  for (const auto& [fact, value] : reply.sources) sources.push_back({fact, value});
  nlohmann::ordered_json completed = nlohmann::ordered_json::array();
  for (const Completion& c : reply.completed) completed.push_back({c.scene, c.step_total});
  return nlohmann::ordered_json{{"steps", std::move(steps)},
                                {"sources", std::move(sources)},
                                {"completed", std::move(completed)}};
}

inline std::string render_canonical_reply(const ParsedReply& reply) {
  return reply_to_json(reply).dump();
}

// Session persistence document (one strict-JSON file per session).
inline nlohmann::ordered_json session_to_json(const SessionSummary& session) {
  ParsedReply as_reply{session.steps, session.sources, session.completed};
  nlohmann::ordered_json doc = reply_to_json(as_reply);
  nlohmann::ordered_json out;
  out["session"] = session.session_id;
  for (auto& [key, value] : doc.items()) out[key] = std::move(value);
  nlohmann::ordered_json degraded = nlohmann::ordered_json::array();
  for (const auto& [from, to] : session.degraded_sections)
    degraded.push_back({from, to});
  out["degraded_sections"] = std::move(degraded);
  return out;
}

inline SessionSummary session_from_json(const nlohmann::json& doc, const LogicGraph& graph) {
  SessionSummary session;
  session.session_id = doc.value("session", "");
  ParsedReply reply = detail::parse_strict_reply(doc, graph);
  session.steps = std::move(reply.steps);
  session.sources = std::move(reply.sources);
  session.completed = std::move(reply.completed);
  if (doc.contains("degraded_sections"))
    for (const auto& range : doc.at("degraded_sections"))
      session.degraded_sections.emplace_back(range.at(0).get<int>(),
                                             range.at(1).get<int>());
  return session;
}

}  // namespace painpoint
