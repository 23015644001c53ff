#pragma once

#include <tuple>
#include <algorithm>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "painpoint/detail/text.hpp"
#include "painpoint/errors.hpp"
#include "painpoint/gateway.hpp"
#include "painpoint/log_ingest.hpp"
#include "painpoint/logic_graph.hpp"
#include "painpoint/summary.hpp"

namespace painpoint {

struct PromptBundle {
  std::string system_text;
  std::vector<std::pair<std::string, std::string>> examples;  // (user, assistant)
  std::string user_text;
  bool operator==(const PromptBundle&) const = default;
};

// Completed scenes and source knowledge carried between sections of a session.
struct CarriedState {
  std::vector<Completion> completed;
  SourceMap sources;
};

// In-context example pairs, stored as alternating sentinel-delimited blocks.
struct ExampleSet {
  std::vector<std::pair<std::string, std::string>> pairs;

  static constexpr std::string_view kUserSentinel = "--- user ---";
  static constexpr std::string_view kAssistantSentinel = "--- assistant ---";

  static ExampleSet parse(std::string_view text) {
    ExampleSet set;
    std::vector<std::string> blocks;
    std::vector<bool> is_user;
    std::string current;
    bool in_block = false;
    bool current_is_user = false;
    auto flush = [&]() {
      if (!in_block) return;
      while (!current.empty() && current.back() == '\n') current.pop_back();
      blocks.push_back(current);
      is_user.push_back(current_is_user);
      current.clear();
    };
    for (std::string_view line : detail::split_lines(text)) {
      if (detail::trim(line) == kUserSentinel) {
        flush();
        in_block = true;
        current_is_user = true;
      } else if (detail::trim(line) == kAssistantSentinel) {
        flush();
        in_block = true;
        current_is_user = false;
      } else if (in_block) {
        current += line;
        current += '\n';
      } else if (!detail::trim(line).empty()) {
        throw ConfigError("example set: text before first sentinel");
      }
    }
    flush();
    if (blocks.size() % 2 != 0)
      throw ConfigError("example set: unpaired block (needs user/assistant pairs)");
    for (size_t i = 0; i < blocks.size(); i += 2) {
      if (!is_user[i] || is_user[i + 1])
        throw ConfigError("example set: blocks must alternate user/assistant");
      set.pairs.emplace_back(std::move(blocks[i]), std::move(blocks[i + 1]));
    }
    return set;
  }

  std::string render() const {
    std::string out;
    for (const auto& [user, assistant] : pairs) {
      out += std::string(kUserSentinel) + "\n" + user + "\n";
      out += std::string(kAssistantSentinel) + "\n" + assistant + "\n";
    }
    return out;
  }
};

struct SummarizerConfig {
  int window = 2;
  int retry_limit = 2;
  bool require_examples = true;
  std::string system_template;  // prepended to the rendered graph
  ExampleSet examples;
  int round_length = 30;
};

inline std::string render_section_steps(const Section& section) {
  std::string out;
  for (const GameStep& step : section.steps) detail::render_step(step, out);
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

inline PromptBundle build_prompt(const LogicGraph& graph, const Section& section,
                                 const CarriedState& carried,
                                 const SummarizerConfig& config) {
  if (config.require_examples && config.examples.pairs.empty())
    throw ConfigError("summarizer requires a non-empty example set");
  PromptBundle bundle;
  bundle.system_text = config.system_template;
  if (!bundle.system_text.empty() && bundle.system_text.back() != '\n')
    bundle.system_text += '\n';
  bundle.system_text += "\n" + graph.render_for_prompt();
  bundle.examples = config.examples.pairs;
  bundle.user_text = "Completed nodes so far: " + format_completed(carried.completed) +
                     "\n" + "Sources: " + format_sources(carried.sources) + "\n" +
                     render_section_steps(section);
  return bundle;
}

inline ChatRequest bundle_to_request(const PromptBundle& bundle,
                                     const GatewayConfig& gateway_config) {
  ChatRequest request;
  request.model = gateway_config.model;
  request.temperature = gateway_config.temperature;
  request.max_output_tokens = gateway_config.max_output_tokens;
  request.messages.push_back({Role::system, bundle.system_text});
  for (const auto& [user, assistant] : bundle.examples) {
    request.messages.push_back({Role::user, user});
    request.messages.push_back({Role::assistant, assistant});
  }
  request.messages.push_back({Role::user, bundle.user_text});
  return request;
}

// ---------------------------------------------------------------------------
// Consistency checking (the automated temporal-legality gate)

struct ConsistencyViolation {
  std::string kind;  // illegal-completion | timestamp | context-drift | source-regression | coverage
  std::string detail;
};

struct ConsistencyReport {
  std::vector<ConsistencyViolation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const {
    std::string out;
    for (const auto& v : violations) {
      if (!out.empty()) out += "; ";
      out += v.kind + ": " + v.detail;
    }
    return out;
  }
};

// Checks one section's accepted reply against the locally carried state.
inline ConsistencyReport check_section_consistency(const LogicGraph& graph,
                                                   const CarriedState& carried,
                                                   const ParsedReply& reply,
                                                   const Section& section) {
  ConsistencyReport report;

  // Every section step summarized exactly once, in order.
  if (reply.steps.size() != section.steps.size()) {
    report.violations.push_back(
        {"coverage", "reply has " + std::to_string(reply.steps.size()) +
                         " step records for " + std::to_string(section.steps.size()) +
                         " section steps"});
  } else {
    for (size_t i = 0; i < reply.steps.size(); ++i) {
      if (reply.steps[i].step_total != section.steps[i].step_total ||
          reply.steps[i].step_in_round != section.steps[i].step_in_round) {
        report.violations.push_back(
            {"coverage", "step record " + std::to_string(i + 1) +
                             " does not match section step " +
                             std::to_string(section.steps[i].step_total)});
        break;
      }
    }
  }

  // Completion timestamps must fall inside the section and not after the
  // reporting step. (Curated examples report a completion one step late, so
  // equality with the reporting step is not required.)
  for (const StepSummary& rec : reply.steps) {
    for (const Completion& c : rec.newly_completed) {
      if (c.step_total < section.first_step_total || c.step_total > rec.step_total) {
        report.violations.push_back(
            {"timestamp", "(" + c.scene + "," + std::to_string(c.step_total) +
                              ") reported at step " + std::to_string(rec.step_total) +
                              " lies outside the section"});
      }
    }
  }

  // Cumulative legality of carried + newly completed.
  std::vector<Completion> cumulative = carried.completed;
  for (const StepSummary& rec : reply.steps)
    for (const Completion& c : rec.newly_completed) cumulative.push_back(c);
  LegalityResult legality = graph.check_completion_legal(cumulative);
  if (!legality.legal)
    report.violations.push_back({"illegal-completion", legality.violation});

  // The echoed completed list must equal the locally accumulated one.
  auto sorted = [](std::vector<Completion> v) {
    std::sort(v.begin(), v.end(), [](const Completion& a, const Completion& b) {
      return std::tie(a.step_total, a.scene) < std::tie(b.step_total, b.scene);
    });
    return v;
  };
  if (sorted(cumulative) != sorted(reply.completed))
    report.violations.push_back(
        {"context-drift", "echoed completed list " + format_completed(reply.completed) +
                              " does not match accumulated " +
                              format_completed(cumulative)});

  // Knowledge is retained across resets: a source never reverts.
  for (size_t i = 0; i < carried.sources.size() && i < reply.sources.size(); ++i) {
    const auto& [fact, before] = carried.sources[i];
    const std::string& after = reply.sources[i].second;
    if (before != "NA" && after != before)
      report.violations.push_back(
          {"source-regression", fact + " changed from '" + before + "' to '" + after + "'"});
  }
  return report;
}

// Session-level view: replies in section order, each checked against the
// state accumulated from the accepted prefix.
inline ConsistencyReport check_consistency(
    const LogicGraph& graph,
    const std::vector<std::pair<Section, ParsedReply>>& sections) {
  ConsistencyReport report;
  CarriedState carried{{}, initial_sources(graph)};
  for (const auto& [section, reply] : sections) {
    ConsistencyReport section_report =
        check_section_consistency(graph, carried, reply, section);
    for (auto& v : section_report.violations) report.violations.push_back(std::move(v));
    for (const StepSummary& rec : reply.steps)
      for (const Completion& c : rec.newly_completed) carried.completed.push_back(c);
    carried.sources = reply.sources;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Stage-1 driver

inline StepSummary unmapped_step_summary(const GameStep& step) {
  StepSummary s;
  s.step_in_round = step.step_in_round;
  s.step_total = step.step_total;
  s.is_action = step.action().has_value();
  s.synopsis = "Step left unmapped because the summarizer reply was rejected.";
  s.success = false;
  s.mapped_scenes = {};
  s.helpful = false;
  return s;
}

inline SessionSummary summarize_session(const LogicGraph& graph, const CleanedLog& log,
                                        Gateway& gateway, const SummarizerConfig& config) {
  SessionSummary session;
  session.session_id = log.session_id;
  session.sources = initial_sources(graph);

  CarriedState carried{{}, initial_sources(graph)};
  for (const Section& section : segment(log, config.window)) {
    std::string rejection_note;
    bool accepted = false;
    for (int attempt = 0; attempt <= config.retry_limit; ++attempt) {
      PromptBundle bundle = build_prompt(graph, section, carried, config);
      if (!rejection_note.empty())
        bundle.user_text +=
            "\n\nYour previous reply was rejected: " + rejection_note +
            ". Reply again using the exact required format.";
      ChatResponse response = gateway.complete(bundle_to_request(bundle, gateway.config()));
      ParsedReply reply;
      try {
        reply = parse_summary(response.text, graph);
      } catch (const SummaryParseError& e) {
        rejection_note = e.what();
        continue;
      }
      ConsistencyReport report = check_section_consistency(graph, carried, reply, section);
      if (!report.ok()) {
        rejection_note = report.to_string();
        continue;
      }
      for (const StepSummary& rec : reply.steps) {
        session.steps.push_back(rec);
        for (const Completion& c : rec.newly_completed) carried.completed.push_back(c);
      }
      carried.sources = reply.sources;
      accepted = true;
      break;
    }
    if (!accepted) {
      for (const GameStep& step : section.steps)
        session.steps.push_back(unmapped_step_summary(step));
      session.degraded_sections.emplace_back(section.first_step_total,
                                             section.last_step_total);
    }
  }
  session.completed = carried.completed;
  session.sources = carried.sources;

  LegalityResult legality = graph.check_completion_legal(session.completed);
  if (!legality.legal)
    throw ValidationError("session " + session.session_id +
                          " produced an illegal completion list: " + legality.violation);
  return session;
}

}  // namespace painpoint
