#pragma once

#include <algorithm>
#include <thread>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "painpoint/detail/sha256.hpp"
#include "painpoint/errors.hpp"

namespace painpoint {

enum class Role { system, user, assistant };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

struct ChatMessage {
  Role role = Role::user;
  std::string text;
  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = 2048;
  bool operator==(const ChatRequest&) const = default;
};

struct TokenUsage {
  int prompt_tokens = 0;
  int output_tokens = 0;
};

enum class Provenance { live, cached, scripted };

struct ChatResponse {
  std::string text;
  std::string finish_reason = "stop";
  std::optional<TokenUsage> usage;
  Provenance provenance = Provenance::live;
};

inline nlohmann::ordered_json request_to_json(const ChatRequest& request) {
  nlohmann::ordered_json messages = nlohmann::ordered_json::array();
  for (const ChatMessage& m : request.messages)
    messages.push_back({{"role", role_name(m.role)}, {"content", m.text}});
  return nlohmann::ordered_json{{"model", request.model},
                                {"messages", std::move(messages)},
                                {"temperature", request.temperature},
                                {"max_tokens", request.max_output_tokens}};
}

// Stable across runs: any field change changes the digest.
inline std::string request_digest(const ChatRequest& request) {
  return detail::Sha256::hash_hex(request_to_json(request).dump());
}

// ---------------------------------------------------------------------------
// Rate limiting: token bucket, one token per admitted request.

class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;
  using NowFn = std::function<Clock::time_point()>;
  using SleepFn = std::function<void(std::chrono::milliseconds)>;

  // per_minute <= 0 disables limiting.
  explicit RateLimiter(double per_minute, NowFn now = &Clock::now,
                       SleepFn sleep = default_sleep)
      : per_minute_(per_minute),
        tokens_(per_minute > 0 ? per_minute : 0),
        now_(std::move(now)),
        sleep_(std::move(sleep)) {
    last_refill_ = now_();
  }

  void acquire() {
    if (per_minute_ <= 0) return;
    while (true) {
      std::chrono::milliseconds wait{0};
      {
        std::lock_guard<std::mutex> lock(mutex_);
        refill();
        if (tokens_ >= 1.0) {
          tokens_ -= 1.0;
          return;
        }
        double missing = 1.0 - tokens_;
        wait = std::chrono::milliseconds(
            static_cast<long long>(missing / per_minute_ * 60000.0) + 1);
      }
      sleep_(wait);
    }
  }

  // Non-blocking probe, used by tests.
  bool try_acquire() {
    if (per_minute_ <= 0) return true;
    std::lock_guard<std::mutex> lock(mutex_);
    refill();
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return true;
    }
    return false;
  }

 private:
  static void default_sleep(std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  }

  void refill() {
    auto now = now_();
    double elapsed_min =
        std::chrono::duration_cast<std::chrono::duration<double>>(now - last_refill_)
            .count() /
        60.0;
    if (elapsed_min > 0) {
      tokens_ = std::min(per_minute_, tokens_ + elapsed_min * per_minute_);
      last_refill_ = now;
    }
  }

  double per_minute_;
  double tokens_;
  NowFn now_;
  SleepFn sleep_;
  Clock::time_point last_refill_;
  std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Transport abstraction; the HTTP implementation lives in http_transport.hpp
// so replay/scripted builds never touch networking code.

struct HttpResult {
  int status = 0;
  std::string body;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResult post(const std::string& url,
                          const std::vector<std::pair<std::string, std::string>>& headers,
                          const std::string& body) = 0;
};

enum class GatewayMode { live, record, replay, scripted };

inline GatewayMode gateway_mode_from_string(const std::string& s) {
  if (s == "live") return GatewayMode::live;
  if (s == "record") return GatewayMode::record;
  if (s == "replay") return GatewayMode::replay;
  if (s == "script" || s == "scripted") return GatewayMode::scripted;
  throw ConfigError("unknown gateway mode '" + s + "'");
}

struct GatewayConfig {
  GatewayMode mode = GatewayMode::scripted;
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string api_key;
  std::string model = "gpt-4";
  double temperature = 0.0;
  int max_output_tokens = 2048;
  std::string store_dir;             // record/replay store
  std::vector<std::string> script;   // scripted replies, served in order
  double rate_per_minute = 0;        // 0 = unlimited
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{250};
};

class Gateway {
 public:
  using SleepFn = std::function<void(std::chrono::milliseconds)>;

  explicit Gateway(GatewayConfig config, std::unique_ptr<Transport> transport = nullptr,
                   SleepFn sleep = default_sleep)
      : config_(std::move(config)),
        transport_(std::move(transport)),
        sleep_(std::move(sleep)),
        limiter_(config_.rate_per_minute) {}

  const GatewayConfig& config() const { return config_; }

  ChatResponse complete(const ChatRequest& request) {
    if (request.messages.empty())
      throw GatewayError("chat request has no messages");
    switch (config_.mode) {
      case GatewayMode::scripted: return complete_scripted();
      case GatewayMode::replay: return complete_replay(request);
      case GatewayMode::record: {
        ChatResponse response = complete_live(request);
        store_response(request, response);
        return response;
      }
      case GatewayMode::live: return complete_live(request);
    }
    throw GatewayError("unreachable gateway mode");
  }

  size_t script_cursor() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return script_index_;
  }

 private:
  static void default_sleep(std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  }

  ChatResponse complete_scripted() {
    std::lock_guard<std::mutex> lock(mutex_);
    if (script_index_ >= config_.script.size())
      throw GatewayError("script exhausted after " + std::to_string(script_index_) +
                         " replies");
    ChatResponse r;
    r.text = config_.script[script_index_++];
    r.provenance = Provenance::scripted;
    return r;
  }

  std::filesystem::path store_path(const std::string& digest) const {
    return std::filesystem::path(config_.store_dir) / (digest + ".json");
  }

  ChatResponse complete_replay(const ChatRequest& request) {
    std::string digest = request_digest(request);
    std::ifstream in(store_path(digest));
    if (!in)
      throw GatewayError("replay miss: no stored response for digest " + digest);
    nlohmann::json doc = nlohmann::json::parse(in);
    ChatResponse r;
    r.text = doc.at("response").at("text").get<std::string>();
    r.finish_reason = doc.at("response").value("finish_reason", "stop");
    r.provenance = Provenance::cached;
    return r;
  }

  void store_response(const ChatRequest& request, const ChatResponse& response) {
    std::string digest = request_digest(request);
    std::filesystem::create_directories(config_.store_dir);
    nlohmann::ordered_json doc{
        {"digest", digest},
        {"request", request_to_json(request)},
        {"response",
         {{"text", response.text}, {"finish_reason", response.finish_reason}}}};
    std::lock_guard<std::mutex> lock(mutex_);
    std::ofstream out(store_path(digest));
    out << doc.dump(2) << "\n";
  }

  ChatResponse complete_live(const ChatRequest& request) {
    if (!transport_) throw GatewayError("live mode requires a transport");
    if (config_.base_url.empty()) throw GatewayError("no endpoint base URL configured");
    std::string url = config_.base_url;
    if (!url.empty() && url.back() == '/') url.pop_back();
    url += "/chat/completions";
    std::vector<std::pair<std::string, std::string>> headers{
        {"Content-Type", "application/json"}};
    if (!config_.api_key.empty())
      headers.emplace_back("Authorization", "Bearer " + config_.api_key);
    std::string body = request_to_json(request).dump();

    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
      limiter_.acquire();
      HttpResult result;
      try {
        result = transport_->post(url, headers, body);
      } catch (const std::exception& e) {
        result.status = 0;
        last_error = e.what();
      }
      if (result.status == 200) return parse_completion_body(result.body);
      bool transient = result.status == 0 || result.status == 429 || result.status >= 500;
      if (result.status != 0)
        last_error = "HTTP " + std::to_string(result.status) + ": " + result.body;
      if (!transient)
        throw GatewayError("chat completion failed: " + last_error);
      if (attempt < config_.max_attempts)
        sleep_(config_.backoff_base * (1 << (attempt - 1)));
    }
    throw GatewayError("chat completion failed after " +
                       std::to_string(config_.max_attempts) + " attempts: " + last_error);
  }

  static ChatResponse parse_completion_body(const std::string& body) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw GatewayError(std::string("unparseable completion response: ") + e.what());
    }
    if (!doc.contains("choices") || doc["choices"].empty())
      throw GatewayError("completion response has no choices");
    const auto& choice = doc["choices"][0];
    ChatResponse r;
    if (choice.contains("message") && choice["message"].contains("content") &&
        !choice["message"]["content"].is_null())
      r.text = choice["message"]["content"].get<std::string>();
    r.finish_reason = choice.value("finish_reason", "stop");
    if (r.text.empty() && r.finish_reason == "stop")
      throw GatewayError("completion response has empty text");
    if (doc.contains("usage")) {
      TokenUsage u;
      u.prompt_tokens = doc["usage"].value("prompt_tokens", 0);
      u.output_tokens = doc["usage"].value("completion_tokens", 0);
      r.usage = u;
    }
    r.provenance = Provenance::live;
    return r;
  }

  GatewayConfig config_;
  std::unique_ptr<Transport> transport_;
  SleepFn sleep_;
  RateLimiter limiter_;
  mutable std::mutex mutex_;
  size_t script_index_ = 0;
};

}  // namespace painpoint
