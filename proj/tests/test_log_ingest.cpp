#include <doctest.h>

#include "painpoint/log_ingest.hpp"
#include "painpoint/logic_graph.hpp"
#include "painpoint/report.hpp"
#include "painpoint/synth.hpp"

using namespace painpoint;

namespace {

std::string data_path(const std::string& name) {
  return std::string(PAINPOINT_DATA_DIR) + "/" + name;
}

std::string raw_sample() { return read_file(data_path("fixtures/raw_engine_sample.log")); }
std::string cleaned_sample() {
  return read_file(data_path("fixtures/cleaned_engine_sample.log"));
}

// Strip per-line trailing whitespace and trailing newlines.
std::string normalize_trailing(std::string_view text) {
  std::string out;
  for (std::string_view line : detail::split_lines(text)) {
    out += detail::rtrim(line);
    out += '\n';
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

}  // namespace

TEST_CASE("raw engine sample parses into 3 steps, one reset at 0, and an intro block") {
  RawParse parsed = parse_raw_log(raw_sample());
  int steps = 0, resets = 0, intros = 0;
  bool seen_step = false;
  for (const RawEvent& ev : parsed.events) {
    if (ev.kind == RawEventKind::step_start) {
      ++steps;
      seen_step = true;
    }
    if (ev.kind == RawEventKind::reset) {
      ++resets;
      CHECK(ev.text == "0");
    }
    if (ev.kind == RawEventKind::game_text && !seen_step) ++intros;
  }
  CHECK(steps == 3);
  CHECK(resets == 1);
  CHECK(intros == 1);
  CHECK(parsed.warnings.empty());
}

TEST_CASE("raw log with only header lines is an error") {
  CHECK_THROWS_WITH_AS(
      parse_raw_log("2023-07-13 16:06:08,640 MainThread INFO LLM:gpt-4-32k\n"),
      doctest::Contains("no game steps"), IngestError);
  CHECK_THROWS_AS(parse_raw_log("   \n"), IngestError);
}

TEST_CASE("malformed timestamp lines are skipped with a warning") {
  // Mutate the timestamp of each record line in turn; parsing must survive
  // with a warning and without inventing steps.
  std::string base = raw_sample();
  auto lines = detail::split_lines(base);
  int mutated = 0;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find(" INFO ") == std::string_view::npos) continue;
    if (lines[i].find("<Game step>") != std::string_view::npos) continue;
    std::string broken;
    for (size_t j = 0; j < lines.size(); ++j) {
      std::string line(lines[j]);
      if (j == i) line[2] = 'X';  // breaks the date
      broken += line + "\n";
    }
    RawParse parsed = parse_raw_log(broken);
    ++mutated;
    CHECK(!parsed.warnings.empty());
    int steps = 0;
    for (const RawEvent& ev : parsed.events)
      if (ev.kind == RawEventKind::step_start) ++steps;
    CHECK(steps == 3);
  }
  CHECK(mutated > 10);
}

TEST_CASE("cleaning the raw engine sample reproduces the cleaned sample") {
  CleanedLog log = clean_log(parse_raw_log(raw_sample()), {"sample", 30});
  std::string rendered = render_cleaned(log);
  CHECK(normalize_trailing(rendered) == normalize_trailing(cleaned_sample()));
}

TEST_CASE("cleaned sample details") {
  CleanedLog log = clean_log(parse_raw_log(raw_sample()), {"sample", 30});
  REQUIRE(log.steps.size() == 3);

  SUBCASE("step without NPC payload has no utterances") {
    CHECK(log.steps[2].npc_utterances.empty());
    CHECK(log.steps[2].location == "main street");
  }
  SUBCASE("NPC id/words merge into tagged utterances") {
    REQUIRE(log.steps[0].npc_utterances.size() == 1);
    CHECK(log.steps[0].npc_utterances[0].name == "Mrs. Thompson");
    CHECK(log.steps[0].npc_utterances[0].text ==
          "Hello there! It's a lovely day, isn't it? How are you doing today?");
  }
  SUBCASE("structured player fields") {
    CHECK(log.steps[0].action() == "go west");
    CHECK_FALSE(log.steps[0].words().has_value());
    CHECK_FALSE(log.steps[1].action().has_value());
    CHECK(log.steps[1].words() ==
          "Internally I know she is doomed so I move past her to the town.");
    CHECK(log.steps[0].inventory().empty());
  }
  SUBCASE("TextWorld carried forward when a step has none") {
    REQUIRE(log.steps[1].textworld.has_value());
    CHECK(*log.steps[1].textworld == *log.steps[0].textworld);
  }
  SUBCASE("reset markers start with 0") {
    CHECK(log.reset_markers == std::vector<int>{0});
  }
}

TEST_CASE("Player_processed wins over the free-text Player line") {
  std::string raw =
      "2023-07-13 16:06:08,641 MainThread INFO <Game reset> 0\n"
      "2023-07-13 16:08:54,455 MainThread INFO <Game step> 1/1\n"
      "2023-07-13 16:08:54,455 MainThread INFO <Player> free text that disagrees\n"
      "2023-07-13 16:08:59,817 MainThread INFO <Player_processed>[action] go north. "
      "[words] None. [inventory]={}\n"
      "2023-07-13 16:09:08,657 MainThread INFO <Game> location = park\n";
  CleanedLog log = clean_log(parse_raw_log(raw));
  REQUIRE(log.steps.size() == 1);
  CHECK(log.steps[0].action() == "go north");
  CHECK(log.steps[0].player_payload == "[action] go north. [words] None. [inventory]={}");
}

TEST_CASE("step missing both action and words is an ingest error") {
  std::string raw =
      "2023-07-13 16:08:54,455 MainThread INFO <Game step> 1/1\n"
      "2023-07-13 16:08:59,817 MainThread INFO <Player_processed>[action] None. "
      "[words] None. [inventory]={}\n";
  CHECK_THROWS_WITH_AS(clean_log(parse_raw_log(raw)),
                       doctest::Contains("missing both action and words"), IngestError);
}

TEST_CASE("cleaned render of an empty-steps log is the intro block only") {
  CleanedLog log;
  log.intro = "-= Home =-\n\nA quiet morning.";
  log.reset_markers = {0};
  CHECK(render_cleaned(log) == "-= Home =-\n\nA quiet morning.\n");
}

TEST_CASE("render/parse round trip on synthetic logs") {
  LogicGraph graph =
      LogicGraph::parse(read_file(std::string(PAINPOINT_DATA_DIR) + "/dejaboom.graph"));
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    PlayerPolicy policy;
    policy.seed = seed;
    policy.default_success = 0.4 + 0.2 * static_cast<double>(seed % 3);
    policy.wander_rate = 0.2;
    GeneratedSession generated =
        generate_session(graph, policy, 2, 12, "p" + std::to_string(seed), seed);
    CleanedLog reparsed = parse_cleaned(render_cleaned(generated.log),
                                        {generated.log.session_id, 12});
    CHECK(reparsed == generated.log);
  }
}

TEST_CASE("cleaned parse accepts the curated session fragment") {
  CleanedLog log =
      parse_cleaned(read_file(data_path("fixtures/curated_session.log")), {"s1", 30});
  CHECK(log.intro.empty());
  REQUIRE(log.steps.size() == 4);
  CHECK(log.steps[0].inventory() == std::vector<std::string>{"water bucket"});
  CHECK(log.steps[1].npc_utterances.size() == 1);
  CHECK(render_cleaned(log) == read_file(data_path("fixtures/curated_session.log")));
}

TEST_CASE("segmentation") {
  auto make_log = [](int n, std::vector<int> resets) {
    CleanedLog log;
    log.session_id = "s";
    log.reset_markers = {0};
    for (int r : resets) log.reset_markers.push_back(r);
    int in_round = 0;
    for (int t = 1; t <= n; ++t) {
      bool reset = false;
      for (int r : resets)
        if (r == t - 1 && r > 0) reset = true;
      in_round = reset ? 1 : in_round + 1;
      GameStep step;
      step.step_in_round = in_round;
      step.step_total = t;
      step.player_payload = make_player_payload("look", std::nullopt, {});
      step.location = "village";
      log.steps.push_back(step);
    }
    return log;
  };

  SUBCASE("4 steps, W=2 -> two sections of 2") {
    auto sections = segment(make_log(4, {}), 2);
    REQUIRE(sections.size() == 2);
    CHECK(sections[0].steps.size() == 2);
    CHECK(sections[1].steps.size() == 2);
    CHECK(sections[0].first_step_total == 1);
    CHECK(sections[1].last_step_total == 4);
  }
  SUBCASE("5 steps, W=2 -> sizes 2,2,1") {
    auto sections = segment(make_log(5, {}), 2);
    REQUIRE(sections.size() == 3);
    CHECK(sections[2].steps.size() == 1);
  }
  SUBCASE("reset after step 3 splits sections (1,2),(3),(4)") {
    auto sections = segment(make_log(4, {3}), 2);
    REQUIRE(sections.size() == 3);
    CHECK(sections[0].steps.size() == 2);
    CHECK(sections[1].steps.size() == 1);
    CHECK(sections[1].first_step_total == 3);
    CHECK(sections[2].steps.size() == 1);
    CHECK(sections[2].first_step_total == 4);
  }
  SUBCASE("W=0 is a config error") {
    CHECK_THROWS_AS(segment(make_log(2, {}), 0), ConfigError);
  }
  SUBCASE("sections concatenate back to the full step list") {
    for (int n : {1, 5, 9, 17}) {
      for (int w : {1, 2, 3, 5}) {
        auto log = make_log(n, {7});
        auto sections = segment(log, w);
        std::vector<GameStep> glued;
        for (const Section& s : sections)
          glued.insert(glued.end(), s.steps.begin(), s.steps.end());
        CHECK(glued == log.steps);
      }
    }
  }
}

TEST_CASE("cleaning is deterministic") {
  std::string raw = raw_sample();
  CleanedLog a = clean_log(parse_raw_log(raw), {"x", 30});
  CleanedLog b = clean_log(parse_raw_log(raw), {"x", 30});
  CHECK(a == b);
  CHECK(render_cleaned(a) == render_cleaned(b));
}

TEST_CASE("validate_cleaned rejects broken numbering") {
  CleanedLog log;
  log.session_id = "s";
  log.reset_markers = {0};
  GameStep step;
  step.step_in_round = 2;
  step.step_total = 1;
  step.player_payload = make_player_payload("look", std::nullopt, {});
  log.steps.push_back(step);
  CHECK_THROWS_AS(validate_cleaned(log, 30), ValidationError);

  log.steps[0].step_in_round = 1;
  CHECK_NOTHROW(validate_cleaned(log, 30));

  GameStep overflow;
  overflow.step_in_round = 31;
  overflow.step_total = 32;
  overflow.player_payload = make_player_payload("look", std::nullopt, {});
  log.steps.push_back(overflow);
  CHECK_THROWS_WITH_AS(validate_cleaned(log, 30), doctest::Contains("round length"),
                       ValidationError);
}
