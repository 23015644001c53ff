#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "painpoint/http_transport.hpp"
#include "painpoint/painpoint.hpp"

namespace pp = painpoint;
namespace fs = std::filesystem;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* value = std::getenv(name);
  return value ? value : fallback;
}

struct GatewayFlags {
  std::string mode = "script";
  std::string script_path;
  std::string store_dir;
  std::string base_url = env_or("OPENAI_BASE_URL", "https://api.openai.com/v1");
  std::string api_key_env = "OPENAI_API_KEY";
  std::string model = env_or("OPENAI_MODEL", "gpt-4");
  double temperature = 0.0;
  int max_output_tokens = 2048;
  double rate_per_minute = 0;
  int max_attempts = 3;

  void attach(CLI::App* cmd) {
    cmd->add_option("--gw-mode", mode, "gateway mode: live|record|replay|script")
        ->default_val(mode);
    cmd->add_option("--script", script_path, "scripted replies (JSON array of strings)");
    cmd->add_option("--store", store_dir, "record/replay store directory");
    cmd->add_option("--base-url", base_url, "chat-completions base URL");
    cmd->add_option("--api-key-env", api_key_env, "environment variable holding the API key");
    cmd->add_option("--model", model, "model name");
    cmd->add_option("--temperature", temperature, "sampling temperature");
    cmd->add_option("--max-output-tokens", max_output_tokens, "reply length cap");
    cmd->add_option("--rate-limit", rate_per_minute, "requests per minute (0 = unlimited)");
    cmd->add_option("--max-attempts", max_attempts, "transport retry attempts");
  }

  pp::GatewayConfig build() const {
    pp::GatewayConfig config;
    config.mode = pp::gateway_mode_from_string(mode);
    config.base_url = base_url;
    config.api_key = env_or(api_key_env.c_str(), "");
    config.model = model;
    config.temperature = temperature;
    config.max_output_tokens = max_output_tokens;
    config.store_dir = store_dir;
    config.rate_per_minute = rate_per_minute;
    config.max_attempts = max_attempts;
    if (!script_path.empty()) {
      nlohmann::json doc = nlohmann::json::parse(pp::read_file(script_path));
      if (!doc.is_array()) throw pp::ConfigError("script file must be a JSON array");
      for (const auto& item : doc) config.script.push_back(item.get<std::string>());
    }
    if (config.mode == pp::GatewayMode::scripted && config.script.empty())
      throw pp::ConfigError("scripted mode needs --script with at least one reply");
    if ((config.mode == pp::GatewayMode::record || config.mode == pp::GatewayMode::replay) &&
        config.store_dir.empty())
      throw pp::ConfigError("record/replay modes need --store");
    return config;
  }

  pp::Gateway make() const {
    pp::GatewayConfig config = build();
    bool needs_network =
        config.mode == pp::GatewayMode::live || config.mode == pp::GatewayMode::record;
    return pp::Gateway(config, needs_network ? pp::make_http_transport() : nullptr);
  }
};

pp::LogicGraph load_graph(const std::string& path) {
  return pp::LogicGraph::parse(pp::read_file(path));
}

std::vector<pp::SessionSummary> load_summaries(const std::string& dir,
                                               const pp::LogicGraph& graph) {
  std::vector<pp::SessionSummary> summaries;
  for (const fs::path& path : pp::list_files_sorted(dir)) {
    if (path.extension() != ".json") continue;
    summaries.push_back(
        pp::session_from_json(nlohmann::json::parse(pp::read_file(path)), graph));
  }
  if (summaries.empty())
    throw pp::ConfigError("no session summaries found in " + dir);
  return summaries;
}

int run_clean(const std::string& input, const std::string& output, int round_length,
              const std::string& format) {
  auto clean_one = [&](const fs::path& in_path, const fs::path& out_path) {
    std::string text = pp::read_file(in_path);
    std::string session_id = pp::session_id_from_path(in_path);
    pp::CleanOptions options{session_id, round_length};
    bool raw = format == "raw" || (format == "auto" && pp::looks_like_raw_log(text));
    pp::CleanedLog log = raw ? pp::clean_log(pp::parse_raw_log(text), options)
                             : pp::parse_cleaned(text, options);
    pp::validate_cleaned(log, round_length);
    pp::atomic_write_file(out_path, pp::render_cleaned(log));
  };
  if (fs::is_directory(input)) {
    for (const fs::path& path : pp::list_files_sorted(input))
      clean_one(path, fs::path(output) / (pp::session_id_from_path(path) + ".log"));
  } else {
    clean_one(input, output);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "painpoint: mines player pain points and bug hypotheses from text-adventure "
      "game logs aligned to a designer logic graph"};
  app.require_subcommand(1);

  // ---- clean ----------------------------------------------------------
  auto* clean_cmd = app.add_subcommand("clean", "normalize raw engine logs");
  std::string clean_input, clean_output, clean_format = "auto";
  int clean_round_length = 30;
  clean_cmd->add_option("--input", clean_input, "raw log file or directory")->required();
  clean_cmd->add_option("--output", clean_output, "output file or directory")->required();
  clean_cmd->add_option("--round-length", clean_round_length, "steps per round");
  clean_cmd->add_option("--format", clean_format, "raw|cleaned|auto");

  // ---- summarize ------------------------------------------------------
  auto* summarize_cmd = app.add_subcommand("summarize", "stage 1: align logs to the graph");
  std::string sum_graph, sum_log, sum_out, sum_examples, sum_system_prompt;
  int sum_window = 2, sum_retries = 2, sum_round_length = 30;
  bool sum_no_examples = false;
  GatewayFlags sum_gateway;
  summarize_cmd->add_option("--graph", sum_graph, "logic graph file")->required();
  summarize_cmd->add_option("--log", sum_log, "cleaned log file or directory")->required();
  summarize_cmd->add_option("--out", sum_out, "summary JSON file or directory")->required();
  summarize_cmd->add_option("--window", sum_window, "steps per section");
  summarize_cmd->add_option("--retries", sum_retries, "retries per rejected reply");
  summarize_cmd->add_option("--round-length", sum_round_length, "steps per round");
  summarize_cmd->add_option("--examples", sum_examples, "in-context example set file");
  summarize_cmd->add_option("--system-prompt", sum_system_prompt, "system prompt override");
  summarize_cmd->add_flag("--no-examples", sum_no_examples, "allow zero-shot prompting");
  sum_gateway.attach(summarize_cmd);

  // ---- analyze --------------------------------------------------------
  auto* analyze_cmd = app.add_subcommand("analyze", "stage 2: completion stats and flags");
  std::string an_graph, an_summaries, an_out, an_chart;
  double an_tau_low = 0.20, an_drop = 0.5, an_tau_high = -1;
  analyze_cmd->add_option("--graph", an_graph, "logic graph file")->required();
  analyze_cmd->add_option("--summaries", an_summaries, "session summary directory")
      ->required();
  analyze_cmd->add_option("--out", an_out, "stats JSON output")->required();
  analyze_cmd->add_option("--chart", an_chart, "chart CSV output");
  analyze_cmd->add_option("--tau-low", an_tau_low, "low completion threshold");
  analyze_cmd->add_option("--drop-ratio", an_drop, "decline threshold vs predecessor");
  analyze_cmd->add_option("--tau-high", an_tau_high, "high completion threshold (off if <0)");

  // ---- cluster --------------------------------------------------------
  auto* cluster_cmd = app.add_subcommand("cluster", "group synopses for flagged scenes");
  std::string cl_graph, cl_summaries, cl_stats, cl_out, cl_prompt;
  std::vector<std::string> cl_scenes;
  double cl_theta = 0.6;
  int cl_retries = 2;
  bool cl_no_fallback = false;
  GatewayFlags cl_gateway;
  cluster_cmd->add_option("--graph", cl_graph, "logic graph file")->required();
  cluster_cmd->add_option("--summaries", cl_summaries, "session summary directory")
      ->required();
  cluster_cmd->add_option("--stats", cl_stats, "stats JSON from analyze");
  cluster_cmd->add_option("--scene", cl_scenes, "scene id (repeatable; default: flagged)");
  cluster_cmd->add_option("--out", cl_out, "cluster JSON output directory")->required();
  cluster_cmd->add_option("--theta", cl_theta, "fallback Jaccard threshold");
  cluster_cmd->add_option("--retries", cl_retries, "retries per rejected grouping");
  cluster_cmd->add_option("--cluster-prompt", cl_prompt, "grouping prompt override");
  cluster_cmd->add_flag("--no-fallback", cl_no_fallback, "fail instead of falling back");
  cl_gateway.attach(cluster_cmd);

  // ---- report ---------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "assemble reports from stage files");
  std::string rp_graph, rp_summaries, rp_stats, rp_clusters, rp_out;
  report_cmd->add_option("--graph", rp_graph, "logic graph file")->required();
  report_cmd->add_option("--summaries", rp_summaries, "session summary directory")
      ->required();
  report_cmd->add_option("--stats", rp_stats, "stats JSON from analyze")->required();
  report_cmd->add_option("--clusters", rp_clusters, "cluster JSON directory");
  report_cmd->add_option("--out", rp_out, "report output directory")->required();

  // ---- run ------------------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "end-to-end pipeline");
  pp::RunConfig run_config;
  double run_tau_high = -1;
  GatewayFlags run_gateway;
  run_cmd->add_option("--graph", run_config.graph_path, "logic graph file")->required();
  run_cmd->add_option("--logs", run_config.log_dir, "log directory")->required();
  run_cmd->add_option("--out", run_config.out_dir, "output directory")->required();
  run_cmd->add_option("--window", run_config.window, "steps per section");
  run_cmd->add_option("--round-length", run_config.round_length, "steps per round");
  run_cmd->add_option("--retries", run_config.retry_limit, "retries per rejected reply");
  run_cmd->add_option("--tau-low", run_config.flags.tau_low, "low completion threshold");
  run_cmd->add_option("--drop-ratio", run_config.flags.drop_ratio,
                      "decline threshold vs predecessor");
  run_cmd->add_option("--tau-high", run_tau_high, "high completion threshold (off if <0)");
  run_cmd->add_option("--examples", run_config.examples_path, "in-context example set file");
  run_cmd->add_option("--system-prompt", run_config.system_prompt_path,
                      "system prompt override");
  run_cmd->add_option("--cluster-prompt", run_config.cluster_prompt_path,
                      "grouping prompt override");
  run_cmd->add_option("--input-format", run_config.input_format, "raw|cleaned|auto");
  run_cmd->add_option("--theta", run_config.cluster_jaccard, "fallback Jaccard threshold");
  run_cmd->add_option("--cluster-retries", run_config.cluster_retry_limit,
                      "retries per rejected grouping");
  bool run_no_examples = false, run_no_fallback = false;
  run_cmd->add_flag("--no-examples", run_no_examples, "allow zero-shot prompting");
  run_cmd->add_flag("--no-fallback", run_no_fallback, "fail instead of falling back");
  run_gateway.attach(run_cmd);

  // ---- simulate -------------------------------------------------------
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic cohort + script");
  std::string sim_graph, sim_out, sim_policy;
  int sim_cohort = 6, sim_rounds = 2, sim_steps = 30, sim_window = 2;
  uint64_t sim_seed = 1;
  sim_cmd->add_option("--graph", sim_graph, "logic graph file")->required();
  sim_cmd->add_option("--out", sim_out, "output directory")->required();
  sim_cmd->add_option("--cohort", sim_cohort, "number of sessions");
  sim_cmd->add_option("--seed", sim_seed, "base seed");
  sim_cmd->add_option("--policy", sim_policy, "player policy JSON");
  sim_cmd->add_option("--rounds", sim_rounds, "rounds per session");
  sim_cmd->add_option("--steps-per-round", sim_steps, "steps per round");
  sim_cmd->add_option("--window", sim_window, "section window the script targets");
  double sim_tau_low = 0.20, sim_drop = 0.5;
  sim_cmd->add_option("--tau-low", sim_tau_low, "flag threshold the script anticipates");
  sim_cmd->add_option("--drop-ratio", sim_drop, "flag threshold the script anticipates");

  try {
    app.parse(argc, argv);

    if (*clean_cmd)
      return run_clean(clean_input, clean_output, clean_round_length, clean_format);

    if (*summarize_cmd) {
      pp::LogicGraph graph = load_graph(sum_graph);
      pp::SummarizerConfig config;
      config.window = sum_window;
      config.retry_limit = sum_retries;
      config.round_length = sum_round_length;
      config.require_examples = !sum_no_examples;
      config.system_template = sum_system_prompt.empty()
                                   ? std::string(pp::kDefaultSummarizerPrompt)
                                   : pp::read_file(sum_system_prompt);
      if (!sum_examples.empty())
        config.examples = pp::ExampleSet::parse(pp::read_file(sum_examples));
      pp::Gateway gateway = sum_gateway.make();
      auto summarize_one = [&](const fs::path& in_path, const fs::path& out_path) {
        pp::CleanOptions options{pp::session_id_from_path(in_path), sum_round_length};
        pp::CleanedLog log = pp::parse_cleaned(pp::read_file(in_path), options);
        pp::SessionSummary session = pp::summarize_session(graph, log, gateway, config);
        pp::atomic_write_file(out_path, pp::session_to_json(session).dump(2) + "\n");
      };
      if (fs::is_directory(sum_log)) {
        for (const fs::path& path : pp::list_files_sorted(sum_log))
          summarize_one(path, fs::path(sum_out) / (pp::session_id_from_path(path) + ".json"));
      } else {
        summarize_one(sum_log, sum_out);
      }
      return 0;
    }

    if (*analyze_cmd) {
      pp::LogicGraph graph = load_graph(an_graph);
      pp::FlagConfig flags;
      flags.tau_low = an_tau_low;
      flags.drop_ratio = an_drop;
      if (an_tau_high > 0) flags.tau_high = an_tau_high;
      auto summaries = load_summaries(an_summaries, graph);
      auto stats = pp::completion_table(summaries, graph);
      auto pain = pp::flag_pain_points(stats, graph, flags);
      pp::atomic_write_file(an_out, pp::stats_to_json(stats, pain, graph).dump(2) + "\n");
      if (!an_chart.empty())
        pp::atomic_write_file(an_chart, pp::emit_chart_data(stats, pain, graph));
      return 0;
    }

    if (*cluster_cmd) {
      pp::LogicGraph graph = load_graph(cl_graph);
      auto summaries = load_summaries(cl_summaries, graph);
      std::vector<std::string> scenes = cl_scenes;
      if (scenes.empty()) {
        if (cl_stats.empty())
          throw pp::ConfigError("cluster needs --scene or --stats to pick flagged scenes");
        pp::StatsDocument doc =
            pp::stats_from_json(nlohmann::json::parse(pp::read_file(cl_stats)));
        for (const auto& flag : doc.flags) scenes.push_back(flag.scene);
      }
      pp::ClusterConfig config;
      config.retry_limit = cl_retries;
      config.jaccard_threshold = cl_theta;
      config.fallback_enabled = !cl_no_fallback;
      config.prompt_template = cl_prompt.empty() ? std::string(pp::kDefaultClusterPrompt)
                                                 : pp::read_file(cl_prompt);
      pp::Gateway gateway = cl_gateway.make();
      for (const std::string& scene : scenes) {
        auto items = pp::collect_synopses(summaries, scene, graph);
        pp::ClusterResult result;
        if (!items.empty())
          result = pp::cluster_synopses(items, gateway, config, scene,
                                        graph.scene(scene).title);
        pp::atomic_write_file(fs::path(cl_out) / (scene + ".json"),
                              pp::clusters_to_json(scene, result).dump(2) + "\n");
      }
      return 0;
    }

    if (*report_cmd) {
      pp::LogicGraph graph = load_graph(rp_graph);
      auto summaries = load_summaries(rp_summaries, graph);
      pp::StatsDocument doc =
          pp::stats_from_json(nlohmann::json::parse(pp::read_file(rp_stats)));
      pp::BugReport report;
      report.players_total = static_cast<int>(summaries.size());
      for (const auto& s : summaries) {
        report.sessions.push_back(s.session_id);
        if (!s.degraded_sections.empty())
          report.degraded_sessions.emplace_back(s.session_id, s.degraded_sections);
      }
      report.stats = doc.stats;
      report.flags = doc.flags;
      for (const auto& flag : doc.flags) {
        pp::ClusterResult result;
        fs::path cluster_file = fs::path(rp_clusters) / (flag.scene + ".json");
        if (!rp_clusters.empty() && fs::exists(cluster_file))
          result =
              pp::clusters_from_json(nlohmann::json::parse(pp::read_file(cluster_file)));
        report.clusters.emplace_back(flag.scene, std::move(result));
      }
      pp::atomic_write_file(fs::path(rp_out) / "report.json",
                            pp::report_to_json(report, graph).dump(2) + "\n");
      pp::atomic_write_file(fs::path(rp_out) / "report.md",
                            pp::render_report_markdown(report, graph));
      pp::atomic_write_file(fs::path(rp_out) / "chart.csv",
                            pp::emit_chart_data(report.stats, report.flags, graph));
      return 0;
    }

    if (*run_cmd) {
      if (run_tau_high > 0) run_config.flags.tau_high = run_tau_high;
      run_config.require_examples = !run_no_examples;
      run_config.cluster_fallback = !run_no_fallback;
      run_config.gateway = run_gateway.build();
      pp::Gateway gateway = run_gateway.make();
      pp::BugReport report = pp::run_pipeline(run_config, gateway);
      std::cout << "sessions: " << report.players_total
                << ", flags: " << report.flags.size()
                << ", excluded: " << report.excluded.size() << "\n";
      std::cout << "report: " << (fs::path(run_config.out_dir) / "report.md").string()
                << "\n";
      return 0;
    }

    if (*sim_cmd) {
      pp::LogicGraph graph = load_graph(sim_graph);
      pp::PlayerPolicy policy;
      if (!sim_policy.empty())
        policy = pp::PlayerPolicy::from_json(nlohmann::json::parse(pp::read_file(sim_policy)));
      if (policy.seed == 0) policy.seed = sim_seed;
      pp::FlagConfig flags;
      flags.tau_low = sim_tau_low;
      flags.drop_ratio = sim_drop;

      fs::path out(sim_out);
      std::vector<pp::GeneratedSession> cohort;
      std::vector<std::string> script;
      for (int p = 0; p < sim_cohort; ++p) {
        char name[16];
        std::snprintf(name, sizeof(name), "p%02d", p + 1);
        pp::GeneratedSession generated = pp::generate_session(
            graph, policy, sim_rounds, sim_steps, name, static_cast<uint64_t>(p + 1));
        pp::atomic_write_file(out / "logs" / (std::string(name) + ".log"),
                              pp::render_cleaned(generated.log));
        pp::atomic_write_file(out / "truth" / (std::string(name) + ".json"),
                              pp::session_to_json(generated.truth).dump(2) + "\n");
        for (std::string& reply :
             pp::script_for_session(graph, generated, sim_window, policy))
          script.push_back(std::move(reply));
        cohort.push_back(std::move(generated));
      }
      std::vector<pp::SessionSummary> truths;
      for (const auto& g : cohort) truths.push_back(g.truth);
      auto stats = pp::oracle_stats(truths, graph);
      for (const pp::SceneId& scene : pp::oracle_flagged_scenes(stats, graph, flags)) {
        auto items = pp::collect_synopses(truths, scene, graph);
        if (!items.empty()) script.push_back(pp::perfect_grouping_reply(items));
      }
      nlohmann::ordered_json script_doc = nlohmann::ordered_json::array();
      for (const std::string& reply : script) script_doc.push_back(reply);
      pp::atomic_write_file(out / "script.json", script_doc.dump(2) + "\n");
      pp::atomic_write_file(out / "policy.json", policy.to_json().dump(2) + "\n");
      std::cout << "sessions: " << sim_cohort << ", script replies: " << script.size()
                << "\n";
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return pp::exit_code(pp::ErrorKind::config);
  } catch (const pp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pp::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return pp::exit_code(pp::ErrorKind::internal);
  }
  return 0;
}
