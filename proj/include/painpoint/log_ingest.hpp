#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "painpoint/detail/text.hpp"
#include "painpoint/errors.hpp"

namespace painpoint {

struct NpcUtterance {
  std::string name;
  std::string text;
  bool operator==(const NpcUtterance&) const = default;
};

// One gameplay step in cleaned form. The <Player> payload is kept verbatim
// (the cleaned format is a bit-level contract); the structured accessors
// derive from it.
struct GameStep {
  int step_in_round = 0;
  int step_total = 0;
  std::string player_payload;  // "[action] ... [words] ... [inventory]={...}"
  std::optional<std::string> textworld;
  std::string location;
  std::string game_suffix;  // verbatim tail after "location=<loc>", starts with ';'
  std::vector<NpcUtterance> npc_utterances;

  std::optional<std::string> action() const;
  std::optional<std::string> words() const;
  std::vector<std::string> inventory() const;
  std::optional<std::string> extra_feedback() const {
    constexpr std::string_view tag = ";feedback: ";
    if (game_suffix.rfind(tag, 0) == 0) return game_suffix.substr(tag.size());
    return std::nullopt;
  }

  bool operator==(const GameStep&) const = default;
};

struct CleanedLog {
  std::string session_id;
  std::string intro;  // no trailing newline
  std::vector<GameStep> steps;
  // step_total values after which a round reset occurred; always starts with 0.
  std::vector<int> reset_markers;
  bool operator==(const CleanedLog&) const = default;
};

struct Section {
  std::string session_id;
  std::vector<GameStep> steps;
  int first_step_total = 0;
  int last_step_total = 0;
};

// ---------------------------------------------------------------------------
// Player payload helpers

namespace detail {

struct PlayerFields {
  std::optional<std::string> action;
  std::optional<std::string> words;
  std::vector<std::string> inventory;
};

// Field text "None"/"None." means absent; otherwise strip the single
// terminating period the format appends.
inline std::optional<std::string> field_value(std::string_view raw) {
  std::string_view t = trim(raw);
  if (t == "None" || t == "None.") return std::nullopt;
  if (!t.empty() && t.back() == '.') t.remove_suffix(1);
  if (t.empty()) return std::nullopt;
  return std::string(t);
}

inline std::vector<std::string> parse_inventory(std::string_view raw) {
  std::string_view t = trim(raw);
  std::vector<std::string> items;
  if (t.size() < 2 || t.front() != '{') return items;
  t = t.substr(1);
  if (!t.empty() && t.back() == '}') t.remove_suffix(1);
  size_t i = 0;
  while (i < t.size()) {
    while (i < t.size() && (t[i] == ' ' || t[i] == ',')) ++i;
    if (i >= t.size()) break;
    if (t[i] == '\'' || t[i] == '"') {
      char q = t[i++];
      size_t start = i;
      while (i < t.size() && t[i] != q) ++i;
      items.emplace_back(t.substr(start, i - start));
      if (i < t.size()) ++i;
    } else {
      size_t start = i;
      while (i < t.size() && t[i] != ',') ++i;
      auto item = trim(t.substr(start, i - start));
      if (!item.empty()) items.emplace_back(item);
    }
  }
  return items;
}

inline PlayerFields parse_player_payload(std::string_view payload) {
  constexpr std::string_view action_tag = "[action]";
  constexpr std::string_view words_tag = "[words]";
  constexpr std::string_view inv_tag = "[inventory]=";
  size_t a = payload.find(action_tag);
  size_t w = payload.find(words_tag, a == std::string_view::npos ? 0 : a);
  size_t v = payload.find(inv_tag, w == std::string_view::npos ? 0 : w);
  if (a == std::string_view::npos || w == std::string_view::npos ||
      v == std::string_view::npos || !(a < w && w < v))
    throw IngestError("malformed player payload: '" + std::string(payload) + "'");
  PlayerFields f;
  f.action = field_value(payload.substr(a + action_tag.size(), w - a - action_tag.size()));
  f.words = field_value(payload.substr(w + words_tag.size(), v - w - words_tag.size()));
  f.inventory = parse_inventory(payload.substr(v + inv_tag.size()));
  return f;
}

}  // namespace detail

inline std::optional<std::string> GameStep::action() const {
  return detail::parse_player_payload(player_payload).action;
}
inline std::optional<std::string> GameStep::words() const {
  return detail::parse_player_payload(player_payload).words;
}
inline std::vector<std::string> GameStep::inventory() const {
  return detail::parse_player_payload(player_payload).inventory;
}

// Canonical payload builder for synthetic logs.
inline std::string make_player_payload(const std::optional<std::string>& action,
                                       const std::optional<std::string>& words,
                                       const std::vector<std::string>& inventory) {
  std::string inv = "{";
  for (size_t i = 0; i < inventory.size(); ++i) {
    if (i) inv += ", ";
    inv += "'" + inventory[i] + "'";
  }
  inv += "}";
  return "[action] " + (action ? *action + "." : std::string("None.")) + " [words] " +
         (words ? *words + "." : std::string("None.")) + " [inventory]=" + inv;
}

// ---------------------------------------------------------------------------
// Raw log parsing (timestamped engine output)

enum class RawEventKind {
  header,       // config line before the game starts, e.g. "Reset step?:30"
  reset,        // <Game reset> n
  location,     // <location> token
  game_text,    // <Game> payload (intro block or per-step game line)
  step_start,   // <Game step> i/t
  player_free,  // <Player> raw text as typed
  textworld,    // <TextWorld> feedback
  player_processed,  // <Player_processed> structured payload
};

struct RawEvent {
  RawEventKind kind;
  std::string text;
  int step_in_round = 0;
  int step_total = 0;
};

struct RawParse {
  std::vector<RawEvent> events;
  std::vector<std::string> warnings;
};

namespace detail {

// "2023-07-13 16:06:08,640 MainThread INFO <rest>"
inline bool split_log_line(std::string_view line, std::string_view& rest) {
  if (line.size() < 24) return false;
  std::string_view date = line.substr(0, 10);
  if (!(all_digits(date.substr(0, 4)) && date[4] == '-' && all_digits(date.substr(5, 2)) &&
        date[7] == '-' && all_digits(date.substr(8, 2)) && line[10] == ' '))
    return false;
  std::string_view tm = line.substr(11, 12);
  if (!(all_digits(tm.substr(0, 2)) && tm[2] == ':' && all_digits(tm.substr(3, 2)) &&
        tm[5] == ':' && all_digits(tm.substr(6, 2)) && tm[8] == ',' &&
        all_digits(tm.substr(9, 3))))
    return false;
  std::string_view tail = line.substr(23);
  if (tail.empty() || tail[0] != ' ') return false;
  tail = ltrim(tail);
  size_t sp = tail.find(' ');  // thread name
  if (sp == std::string_view::npos) return false;
  tail = ltrim(tail.substr(sp));
  sp = tail.find(' ');  // level
  if (sp == std::string_view::npos) return false;
  rest = tail.substr(sp + 1);
  return true;
}

// A line that resembles a timestamped record but fails strict validation is
// reported as a warning instead of being folded into the previous payload.
inline bool looks_like_log_line(std::string_view line) {
  if (line.empty() || !std::isdigit(static_cast<unsigned char>(line[0]))) return false;
  return line.find(" INFO ") != std::string_view::npos ||
         line.find(" WARNING ") != std::string_view::npos ||
         line.find(" ERROR ") != std::string_view::npos ||
         line.find(" DEBUG ") != std::string_view::npos;
}

inline bool parse_step_numbers(std::string_view text, int& in_round, int& total) {
  auto t = trim(text);
  size_t slash = t.find('/');
  if (slash == std::string_view::npos) return false;
  auto a = trim(t.substr(0, slash));
  auto b = trim(t.substr(slash + 1));
  if (!all_digits(a) || !all_digits(b)) return false;
  in_round = std::stoi(std::string(a));
  total = std::stoi(std::string(b));
  return true;
}

}  // namespace detail

inline RawParse parse_raw_log(std::string_view text) {
  if (detail::trim(text).empty()) throw IngestError("empty raw log");
  RawParse out;
  RawEvent* open = nullptr;
  auto lines = detail::split_lines(text);
  for (size_t li = 0; li < lines.size(); ++li) {
    std::string_view line = lines[li];
    std::string_view rest;
    if (!detail::split_log_line(line, rest)) {
      if (detail::looks_like_log_line(line)) {
        out.warnings.push_back("line " + std::to_string(li + 1) +
                               ": malformed timestamp, line skipped");
      } else if (open != nullptr) {
        open->text += "\n";
        open->text += line;
      } else if (!detail::trim(line).empty()) {
        out.warnings.push_back("line " + std::to_string(li + 1) +
                               ": text before first record ignored");
      }
      continue;
    }
    open = nullptr;
    RawEvent ev;
    auto begins = [&](std::string_view tag) {
      if (rest.rfind(tag, 0) != 0) return false;
      rest = rest.substr(tag.size());
      if (!rest.empty() && rest.front() == ' ') rest = rest.substr(1);
      return true;
    };
    if (begins("<Game reset>")) {
      ev.kind = RawEventKind::reset;
      ev.text = std::string(detail::trim(rest));
    } else if (begins("<Game step>")) {
      if (!detail::parse_step_numbers(rest, ev.step_in_round, ev.step_total)) {
        out.warnings.push_back("line " + std::to_string(li + 1) +
                               ": unreadable step numbers, line skipped");
        continue;
      }
      ev.kind = RawEventKind::step_start;
    } else if (begins("<Game>")) {
      ev.kind = RawEventKind::game_text;
      ev.text = std::string(rest);
    } else if (begins("<location>")) {
      ev.kind = RawEventKind::location;
      ev.text = std::string(detail::trim(rest));
    } else if (begins("<Player_processed>")) {
      ev.kind = RawEventKind::player_processed;
      ev.text = std::string(rest);
    } else if (begins("<Player>")) {
      ev.kind = RawEventKind::player_free;
      ev.text = std::string(rest);
    } else if (begins("<TextWorld>")) {
      ev.kind = RawEventKind::textworld;
      ev.text = std::string(rest);
    } else if (!rest.empty() && rest.front() == '<') {
      out.warnings.push_back("line " + std::to_string(li + 1) +
                             ": unrecognized marker, line kept as warning: " +
                             std::string(detail::trim(rest)));
      continue;
    } else {
      ev.kind = RawEventKind::header;
      ev.text = std::string(detail::trim(rest));
    }
    out.events.push_back(std::move(ev));
    out.events.back().text.shrink_to_fit();
    open = &out.events.back();
  }
  bool any_step = false;
  for (const RawEvent& ev : out.events)
    if (ev.kind == RawEventKind::step_start) { any_step = true; break; }
  if (!any_step) throw IngestError("no game steps found in raw log");
  return out;
}

// ---------------------------------------------------------------------------
// Cleaning

struct CleanOptions {
  std::string session_id = "session";
  int round_length = 30;
};

namespace detail {

struct GameLineFields {
  std::string location;
  std::string suffix;  // ";feedback: ..." when present
  std::vector<NpcUtterance> npcs;
};

// Raw <Game> payloads pack fields separated by whitespace runs:
//   location = X    inventory={...}    [id]Name    [words]Text    feedback: T    Scene: T
inline GameLineFields parse_game_payload(std::string_view payload) {
  struct Field {
    size_t pos;
    int kind;  // 0 location, 1 inventory, 2 id, 3 words, 4 feedback, 5 scene
  };
  std::vector<Field> fields;
  auto boundary_ok = [&](size_t p) {
    return p == 0 || is_space(payload[p - 1]) || payload[p - 1] == ';';
  };
  auto scan = [&](std::string_view tag, int kind, bool need_eq) {
    size_t from = 0;
    while (true) {
      size_t p = payload.find(tag, from);
      if (p == std::string_view::npos) break;
      from = p + 1;
      if (!boundary_ok(p)) continue;
      if (need_eq) {
        size_t q = p + tag.size();
        while (q < payload.size() && payload[q] == ' ') ++q;
        if (q >= payload.size() || payload[q] != '=') continue;
      }
      fields.push_back({p, kind});
    }
  };
  scan("location", 0, true);
  scan("inventory", 1, true);
  scan("[id]", 2, false);
  scan("[words]", 3, false);
  scan("feedback:", 4, false);
  scan("Scene:", 5, false);
  std::sort(fields.begin(), fields.end(),
            [](const Field& a, const Field& b) { return a.pos < b.pos; });

  GameLineFields out;
  std::string pending_npc;
  for (size_t i = 0; i < fields.size(); ++i) {
    size_t begin = fields[i].pos;
    size_t end = (i + 1 < fields.size()) ? fields[i + 1].pos : payload.size();
    std::string_view slice = payload.substr(begin, end - begin);
    switch (fields[i].kind) {
      case 0: {
        size_t eq = slice.find('=');
        out.location = std::string(trim(slice.substr(eq + 1)));
        break;
      }
      case 1:
        break;  // inventory already lives on the player line
      case 2:
        pending_npc = std::string(trim(slice.substr(4)));
        break;
      case 3:
        out.npcs.push_back({pending_npc, std::string(trim(slice.substr(7)))});
        pending_npc.clear();
        break;
      case 4:
        out.suffix = ";feedback: " + std::string(trim(slice.substr(9)));
        break;
      case 5:
        break;  // Scene text duplicates <TextWorld>
    }
  }
  return out;
}

// Drop everything through the "-=GAME START=-" banner; the cleaned intro
// starts at the first room header.
inline std::string extract_intro(std::string_view payload) {
  constexpr std::string_view banner = "-=GAME START=-";
  size_t p = payload.find(banner);
  std::string_view rest = payload;
  if (p != std::string_view::npos) {
    rest = payload.substr(p + banner.size());
    size_t nl = rest.find('\n');
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
  }
  while (!rest.empty() && (rest.front() == '\n' || rest.front() == '\r'))
    rest.remove_prefix(1);
  return std::string(rtrim(rest));
}

}  // namespace detail

inline CleanedLog clean_log(const RawParse& raw, const CleanOptions& options = {}) {
  CleanedLog log;
  log.session_id = options.session_id;
  log.reset_markers.push_back(0);

  GameStep current;
  bool in_step = false;
  bool have_processed = false;
  std::string player_free_text;
  std::optional<std::string> last_textworld;
  std::string last_location;
  bool expect_round_restart = false;
  int last_total = 0;

  auto finalize = [&]() {
    if (!in_step) return;
    if (!have_processed) {
      // No structured echo from the engine; fall back to the raw line,
      // treated as speech.
      std::string words = player_free_text;
      auto t = detail::trim(words);
      if (!t.empty() && t.back() == '.') t.remove_suffix(1);
      if (t.empty())
        throw IngestError("step " + std::to_string(current.step_total) +
                          " is missing both action and words");
      current.player_payload =
          make_player_payload(std::nullopt, std::string(t), {});
    }
    auto fields = detail::parse_player_payload(current.player_payload);
    if (!fields.action && !fields.words)
      throw IngestError("step " + std::to_string(current.step_total) +
                        " is missing both action and words");
    if (!current.textworld && last_textworld) current.textworld = last_textworld;
    if (current.textworld) last_textworld = current.textworld;
    if (current.location.empty()) current.location = last_location;
    last_location = current.location;
    log.steps.push_back(std::move(current));
    current = GameStep{};
    in_step = false;
    have_processed = false;
    player_free_text.clear();
  };

  for (const RawEvent& ev : raw.events) {
    switch (ev.kind) {
      case RawEventKind::header:
        break;
      case RawEventKind::location:
        if (!in_step) last_location = ev.text;
        break;
      case RawEventKind::reset: {
        finalize();
        int marker = last_total;
        if (detail::all_digits(detail::trim(ev.text)))
          marker = std::stoi(std::string(detail::trim(ev.text)));
        if (log.reset_markers.empty() || log.reset_markers.back() != marker)
          log.reset_markers.push_back(marker);
        expect_round_restart = true;
        last_textworld.reset();
        last_location.clear();
        break;
      }
      case RawEventKind::step_start: {
        finalize();
        if (ev.step_total <= last_total)
          throw IngestError("step_total not strictly increasing at step " +
                            std::to_string(ev.step_total));
        if (expect_round_restart && ev.step_in_round != 1)
          throw IngestError("step_in_round did not restart at 1 after reset (step " +
                            std::to_string(ev.step_total) + ")");
        if (ev.step_in_round < 1 || ev.step_in_round > options.round_length)
          throw IngestError("step_in_round " + std::to_string(ev.step_in_round) +
                            " outside round length " +
                            std::to_string(options.round_length));
        expect_round_restart = false;
        last_total = ev.step_total;
        in_step = true;
        current.step_in_round = ev.step_in_round;
        current.step_total = ev.step_total;
        break;
      }
      case RawEventKind::player_free:
        if (in_step) player_free_text = ev.text;
        break;
      case RawEventKind::player_processed:
        if (in_step) {
          // The engine sometimes logs a literal "\n" token inside the payload.
          current.player_payload = detail::replace_all(ev.text, "\\n", "");
          have_processed = true;
        }
        break;
      case RawEventKind::textworld:
        if (in_step) current.textworld = ev.text;
        break;
      case RawEventKind::game_text:
        if (!in_step) {
          if (log.steps.empty() && log.intro.empty())
            log.intro = detail::extract_intro(ev.text);
          break;
        }
        {
          auto fields = detail::parse_game_payload(ev.text);
          if (!fields.location.empty()) current.location = fields.location;
          current.game_suffix = fields.suffix;
          current.npc_utterances = fields.npcs;
        }
        break;
    }
  }
  finalize();
  return log;
}

// ---------------------------------------------------------------------------
// Cleaned-format rendering and parsing

namespace detail {

inline void render_step(const GameStep& s, std::string& out) {
  out += "<Step> " + std::to_string(s.step_in_round) + "/" +
         std::to_string(s.step_total) + "\n";
  out += "<Player> " + s.player_payload + "\n";
  if (s.textworld) out += "<TextWorld> " + *s.textworld + "\n";
  out += "<Game> location=" + s.location + s.game_suffix + "\n";
  for (const NpcUtterance& npc : s.npc_utterances)
    out += "<NPC> " + npc.name + ": " + npc.text + "\n";
}

}  // namespace detail

inline std::string render_cleaned(const CleanedLog& log) {
  std::string out;
  if (!log.intro.empty()) out += log.intro + "\n";
  size_t marker_idx = 0;
  while (marker_idx < log.reset_markers.size() && log.reset_markers[marker_idx] == 0)
    ++marker_idx;
  int prev_total = 0;
  for (const GameStep& step : log.steps) {
    while (marker_idx < log.reset_markers.size() &&
           log.reset_markers[marker_idx] >= prev_total &&
           log.reset_markers[marker_idx] < step.step_total) {
      out += "<Game reset>\n";
      ++marker_idx;
    }
    detail::render_step(step, out);
    prev_total = step.step_total;
  }
  while (marker_idx < log.reset_markers.size()) {
    out += "<Game reset>\n";
    ++marker_idx;
  }
  return out;
}

inline CleanedLog parse_cleaned(std::string_view text, const CleanOptions& options = {}) {
  CleanedLog log;
  log.session_id = options.session_id;
  log.reset_markers.push_back(0);
  auto lines = detail::split_lines(text);

  std::vector<std::string> intro_lines;
  bool in_steps = false;
  GameStep current;
  bool have_step = false;
  std::string* text_sink = nullptr;

  auto finalize = [&]() {
    if (!have_step) return;
    auto fields = detail::parse_player_payload(current.player_payload);
    if (!fields.action && !fields.words)
      throw IngestError("step " + std::to_string(current.step_total) +
                        " is missing both action and words");
    log.steps.push_back(std::move(current));
    current = GameStep{};
    have_step = false;
    text_sink = nullptr;
  };

  for (size_t li = 0; li < lines.size(); ++li) {
    std::string_view line = lines[li];
    auto tagged = [&](std::string_view tag, std::string_view& rest) {
      if (line.rfind(tag, 0) != 0) return false;
      rest = line.substr(tag.size());
      return true;
    };
    std::string_view rest;
    if (tagged("<Step> ", rest)) {
      finalize();
      in_steps = true;
      if (!detail::parse_step_numbers(rest, current.step_in_round, current.step_total))
        throw IngestError("line " + std::to_string(li + 1) + ": unreadable step header");
      have_step = true;
    } else if (tagged("<Game reset>", rest)) {
      finalize();
      in_steps = true;
      int marker = log.steps.empty() ? 0 : log.steps.back().step_total;
      if (log.reset_markers.empty() || log.reset_markers.back() != marker)
        log.reset_markers.push_back(marker);
    } else if (have_step && tagged("<Player> ", rest)) {
      current.player_payload = std::string(rest);
      text_sink = nullptr;
    } else if (have_step && tagged("<TextWorld> ", rest)) {
      current.textworld = std::string(rest);
      text_sink = &*current.textworld;
    } else if (have_step && tagged("<Game> ", rest)) {
      constexpr std::string_view loc_tag = "location=";
      if (rest.rfind(loc_tag, 0) != 0)
        throw IngestError("line " + std::to_string(li + 1) +
                          ": expected 'location=' on <Game> line");
      std::string_view payload = rest.substr(loc_tag.size());
      size_t semi = payload.find(';');
      if (semi == std::string_view::npos) {
        current.location = std::string(payload);
        current.game_suffix.clear();
      } else {
        current.location = std::string(payload.substr(0, semi));
        current.game_suffix = std::string(payload.substr(semi));
      }
      text_sink = &current.game_suffix;
    } else if (have_step && tagged("<NPC> ", rest)) {
      size_t colon = rest.find(": ");
      if (colon == std::string_view::npos)
        throw IngestError("line " + std::to_string(li + 1) + ": malformed <NPC> line");
      current.npc_utterances.push_back(
          {std::string(rest.substr(0, colon)), std::string(rest.substr(colon + 2))});
      text_sink = &current.npc_utterances.back().text;
    } else if (!in_steps) {
      intro_lines.emplace_back(line);
    } else if (text_sink != nullptr) {
      *text_sink += "\n";
      *text_sink += line;
    } else if (!detail::trim(line).empty()) {
      throw IngestError("line " + std::to_string(li + 1) + ": unexpected text '" +
                        std::string(detail::trim(line)) + "'");
    }
  }
  finalize();
  while (!intro_lines.empty() && detail::trim(intro_lines.back()).empty())
    intro_lines.pop_back();
  log.intro = detail::join(intro_lines, "\n");

  int prev = 0;
  for (const GameStep& s : log.steps) {
    if (s.step_total <= prev)
      throw IngestError("step_total not strictly increasing at step " +
                        std::to_string(s.step_total));
    prev = s.step_total;
  }
  return log;
}

inline void validate_cleaned(const CleanedLog& log, int round_length) {
  int prev = 0;
  size_t marker = 0;
  for (const GameStep& s : log.steps) {
    if (s.step_total <= prev)
      throw ValidationError("step_total not strictly increasing at step " +
                            std::to_string(s.step_total));
    bool after_reset = false;
    while (marker < log.reset_markers.size() && log.reset_markers[marker] < s.step_total) {
      if (log.reset_markers[marker] >= prev) after_reset = true;
      ++marker;
    }
    if (after_reset && s.step_in_round != 1)
      throw ValidationError("step_in_round must restart at 1 after a reset (step " +
                            std::to_string(s.step_total) + ")");
    if (s.step_in_round < 1 || s.step_in_round > round_length)
      throw ValidationError("step_in_round " + std::to_string(s.step_in_round) +
                            " outside round length " + std::to_string(round_length));
    if (s.step_total < s.step_in_round)
      throw ValidationError("step_total below step_in_round at step " +
                            std::to_string(s.step_total));
    prev = s.step_total;
  }
}

// Non-overlapping windows of at most `window` steps; a reset always starts a
// new section.
inline std::vector<Section> segment(const CleanedLog& log, int window) {
  if (window < 1) throw ConfigError("section window must be at least 1");
  std::vector<Section> sections;
  Section current;
  current.session_id = log.session_id;
  int prev_total = 0;
  auto flush = [&]() {
    if (current.steps.empty()) return;
    current.first_step_total = current.steps.front().step_total;
    current.last_step_total = current.steps.back().step_total;
    sections.push_back(std::move(current));
    current = Section{};
    current.session_id = log.session_id;
  };
  for (const GameStep& step : log.steps) {
    bool reset_boundary = false;
    for (int m : log.reset_markers)
      if (m >= prev_total && m < step.step_total && m > 0) reset_boundary = true;
    if (reset_boundary || static_cast<int>(current.steps.size()) >= window) flush();
    current.steps.push_back(step);
    prev_total = step.step_total;
  }
  flush();
  return sections;
}

}  // namespace painpoint
