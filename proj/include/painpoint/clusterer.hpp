#pragma once

#include <functional>
#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "painpoint/detail/text.hpp"
#include "painpoint/errors.hpp"
#include "painpoint/gateway.hpp"
#include "painpoint/logic_graph.hpp"
#include "painpoint/summary.hpp"

namespace painpoint {

struct SynopsisItem {
  std::string text;
  std::string session_id;
  int step_total = 0;
  bool success = false;
  bool operator==(const SynopsisItem&) const = default;
};

struct SynopsisCluster {
  std::string label;
  std::vector<SynopsisItem> members;
  std::string bug_type;  // free text for the designer; never auto-filled
  size_t size() const { return members.size(); }
};

struct ClusterConfig {
  int retry_limit = 2;
  double jaccard_threshold = 0.6;
  bool fallback_enabled = true;
  std::string prompt_template;
};

struct ClusterResult {
  std::vector<SynopsisCluster> clusters;
  bool degraded = false;  // true when the deterministic fallback was used
  std::string note;
};

// Every step mapped to the scene contributes one item, session then step order.
inline std::vector<SynopsisItem> collect_synopses(
    const std::vector<SessionSummary>& summaries, const SceneId& scene,
    const LogicGraph& graph) {
  graph.scene(scene);  // unknown-id check
  std::vector<SynopsisItem> items;
  for (const SessionSummary& session : summaries) {
    for (const StepSummary& step : session.steps) {
      bool mapped = false;
      for (const SceneId& id : step.mapped_scenes)
        if (id == scene) mapped = true;
      if (mapped)
        items.push_back({step.synopsis, session.session_id, step.step_total, step.success});
    }
  }
  return items;
}

namespace detail {

struct IndexGroup {
  std::string label;
  std::vector<size_t> members;  // 1-based
};

inline bool is_partition(const std::vector<IndexGroup>& groups, size_t n) {
  std::vector<bool> seen(n, false);
  size_t count = 0;
  for (const IndexGroup& g : groups) {
    if (g.members.empty() || trim(g.label).empty()) return false;
    for (size_t idx : g.members) {
      if (idx < 1 || idx > n || seen[idx - 1]) return false;
      seen[idx - 1] = true;
      ++count;
    }
  }
  return count == n;
}

// Pulls the first JSON array (or {"groups": [...]}) out of the reply text.
inline std::vector<IndexGroup> parse_grouping_reply(std::string_view text) {
  size_t start = text.find_first_of("[{");
  if (start == std::string_view::npos)
    throw ValidationError("grouping reply contains no JSON");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.substr(start));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("grouping reply is not valid JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("groups")) doc = doc.at("groups");
  if (!doc.is_array()) throw ValidationError("grouping reply is not a JSON array");
  std::vector<IndexGroup> groups;
  for (const auto& item : doc) {
    IndexGroup g;
    g.label = item.value("label", "");
    if (!item.contains("members") || !item.at("members").is_array())
      throw ValidationError("grouping entry is missing a members array");
    for (const auto& m : item.at("members")) {
      if (!m.is_number_integer())
        throw ValidationError("grouping member indices must be integers");
      long long v = m.get<long long>();
      if (v < 0) throw ValidationError("grouping member index is negative");
      g.members.push_back(static_cast<size_t>(v));
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  size_t inter = 0;
  for (const std::string& t : a)
    if (b.count(t)) ++inter;
  size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace detail

// Deterministic baseline: exact-duplicate merge, then single-link
// agglomeration of normalized-token sets at the given Jaccard threshold.
// Order-insensitive up to cluster ordering.
inline std::vector<SynopsisCluster> fallback_cluster(const std::vector<SynopsisItem>& items,
                                                     double jaccard_threshold) {
  std::map<std::string, std::vector<size_t>> by_text;  // normalized text -> item indices
  for (size_t i = 0; i < items.size(); ++i) {
    std::string normalized = detail::join(detail::word_tokens(items[i].text), " ");
    by_text[normalized].push_back(i);
  }
  std::vector<std::string> texts;
  std::vector<std::set<std::string>> token_sets;
  for (const auto& [normalized, indices] : by_text) {
    texts.push_back(normalized);
    auto tokens = detail::word_tokens(items[indices.front()].text);
    token_sets.emplace_back(tokens.begin(), tokens.end());
  }

  std::vector<size_t> parent(texts.size());
  for (size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  std::function<size_t(size_t)> find = [&](size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (size_t i = 0; i < texts.size(); ++i)
    for (size_t j = i + 1; j < texts.size(); ++j)
      if (detail::jaccard(token_sets[i], token_sets[j]) >= jaccard_threshold)
        parent[find(i)] = find(j);

  std::map<size_t, std::vector<size_t>> components;  // root -> item indices
  for (size_t t = 0; t < texts.size(); ++t) {
    for (size_t item_idx : by_text.at(texts[t])) components[find(t)].push_back(item_idx);
  }
  std::vector<SynopsisCluster> clusters;
  for (auto& [root, member_indices] : components) {
    std::sort(member_indices.begin(), member_indices.end());
    SynopsisCluster cluster;
    for (size_t idx : member_indices) cluster.members.push_back(items[idx]);
    // Label: longest member sentence, lexicographic tie break.
    for (const SynopsisItem& item : cluster.members) {
      if (item.text.size() > cluster.label.size() ||
          (item.text.size() == cluster.label.size() && item.text < cluster.label) ||
          cluster.label.empty())
        cluster.label = item.text;
    }
    clusters.push_back(std::move(cluster));
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const SynopsisCluster& a, const SynopsisCluster& b) {
              if (a.members.size() != b.members.size())
                return a.members.size() > b.members.size();
              return a.label < b.label;
            });
  return clusters;
}

inline std::string grouping_user_text(const SceneId& scene, const std::string& scene_title,
                                      const std::vector<SynopsisItem>& items) {
  std::string out = "Scene " + scene + ": " + scene_title + "\nSynopses:\n";
  for (size_t i = 0; i < items.size(); ++i)
    out += std::to_string(i + 1) + ". " + items[i].text + "\n";
  out += "\nGroup every synopsis number into exactly one group.";
  return out;
}

// LLM-prompted grouping, validated as a partition of 1..n; retries with an
// error note, then falls back to the deterministic baseline.
inline ClusterResult cluster_synopses(const std::vector<SynopsisItem>& items,
                                      Gateway& gateway, const ClusterConfig& config,
                                      const SceneId& scene, const std::string& scene_title) {
  if (items.empty()) throw ValidationError("no synopses to cluster for scene " + scene);
  ClusterResult result;
  std::string rejection_note;
  for (int attempt = 0; attempt <= config.retry_limit; ++attempt) {
    ChatRequest request;
    request.model = gateway.config().model;
    request.temperature = gateway.config().temperature;
    request.max_output_tokens = gateway.config().max_output_tokens;
    request.messages.push_back({Role::system, config.prompt_template});
    std::string user = grouping_user_text(scene, scene_title, items);
    if (!rejection_note.empty())
      user += "\n\nYour previous grouping was rejected: " + rejection_note +
              ". Every number from 1 to " + std::to_string(items.size()) +
              " must appear in exactly one group.";
    request.messages.push_back({Role::user, user});

    std::vector<detail::IndexGroup> groups;
    try {
      ChatResponse response = gateway.complete(request);
      groups = detail::parse_grouping_reply(response.text);
    } catch (const GatewayError&) {
      if (!config.fallback_enabled) throw;
      break;
    } catch (const ValidationError& e) {
      rejection_note = e.what();
      continue;
    }
    if (!detail::is_partition(groups, items.size())) {
      rejection_note = "the groups do not form a partition of the synopsis numbers";
      continue;
    }
    for (const detail::IndexGroup& g : groups) {
      SynopsisCluster cluster;
      cluster.label = g.label;
      for (size_t idx : g.members) cluster.members.push_back(items[idx - 1]);
      result.clusters.push_back(std::move(cluster));
    }
    return result;
  }
  if (!config.fallback_enabled)
    throw GatewayError("clustering failed for scene " + scene +
                       " and the fallback is disabled: " + rejection_note);
  result.clusters = fallback_cluster(items, config.jaccard_threshold);
  result.degraded = true;
  result.note = rejection_note.empty() ? "provider failure" : rejection_note;
  return result;
}

// Cluster document (strict JSON) for one scene.
inline nlohmann::ordered_json clusters_to_json(const SceneId& scene,
                                               const ClusterResult& result) {
  nlohmann::ordered_json clusters = nlohmann::ordered_json::array();
  for (const SynopsisCluster& cluster : result.clusters) {
    nlohmann::ordered_json members = nlohmann::ordered_json::array();
    for (const SynopsisItem& item : cluster.members)
      members.push_back({{"session", item.session_id},
                         {"step", item.step_total},
                         {"success", item.success},
                         {"text", item.text}});
    clusters.push_back({{"label", cluster.label},
                        {"size", cluster.members.size()},
                        {"bug_type", cluster.bug_type},
                        {"members", std::move(members)}});
  }
  return nlohmann::ordered_json{{"scene", scene},
                                {"degraded", result.degraded},
                                {"note", result.note},
                                {"clusters", std::move(clusters)}};
}

inline ClusterResult clusters_from_json(const nlohmann::json& doc) {
  ClusterResult result;
  result.degraded = doc.value("degraded", false);
  result.note = doc.value("note", "");
  for (const auto& row : doc.at("clusters")) {
    SynopsisCluster cluster;
    cluster.label = row.at("label").get<std::string>();
    cluster.bug_type = row.value("bug_type", "");
    for (const auto& m : row.at("members"))
      cluster.members.push_back({m.at("text").get<std::string>(),
                                 m.at("session").get<std::string>(),
                                 m.at("step").get<int>(), m.at("success").get<bool>()});
    result.clusters.push_back(std::move(cluster));
  }
  return result;
}

}  // namespace painpoint
