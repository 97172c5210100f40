#pragma once

// Single entry point for every external model call: chat completions for
// the patient simulator, doctor generator and judge, and text embeddings
// for the Sim metric. Only this module knows the OpenAI-compatible wire
// shape. Deterministic in-tree transports (echo, scripted, fixture replay,
// hashing embedder) let the rest of the project run without a network.

#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "dxenv/core_model.hpp"

namespace dxenv {

class GatewayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Network failure, timeout, or HTTP 5xx that survived the retry budget.
class TransportError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

/// Response body that does not have the expected shape. Never retried.
class ProtocolError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

/// Backend kept answering 429 until the retry budget ran out.
class RateLimited : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

struct ChatMessage {
  std::string role;  // system | user | assistant | tool
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

void to_json(Json& j, const ChatMessage& m);
void from_json(const Json& j, ChatMessage& m);

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  int max_output_tokens = 1024;
  std::vector<std::string> stop_markers;
};

/// Throws std::invalid_argument when the request breaks its invariants.
void validate_request(const ChatRequest& request);

/// Truncates `text` before the earliest occurrence of any stop marker.
std::string apply_stop_markers(std::string text, const std::vector<std::string>& markers);

struct BackendConfig {
  /// "http" (OpenAI-compatible), "echo", "hash" (offline embedder) or
  /// "fixture" (replay file at `fixture_path`).
  std::string kind = "http";
  std::string base_url;
  std::string model;
  std::string api_key_env;
  double timeout_seconds = 60.0;
  int retry_budget = 3;
  int requests_per_minute = 60;
  std::chrono::milliseconds initial_backoff{500};
  double temperature = 0.7;
  int max_output_tokens = 1024;
  std::string fixture_path;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

BackendConfig backend_config_from_json(const Json& j);
Json to_json(const BackendConfig& c);

// ---------------------------------------------------------------------------
// Time source. Injected so retry backoff and the rate limiter can be tested
// without real sleeps.

class Clock {
 public:
  using time_point = std::chrono::steady_clock::time_point;
  using duration = std::chrono::steady_clock::duration;

  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_for(duration d) = 0;
};

class SystemClock final : public Clock {
 public:
  time_point now() override;
  void sleep_for(duration d) override;
  static std::shared_ptr<Clock> instance();
};

/// Virtual clock: sleep_for advances time instantly.
class ManualClock final : public Clock {
 public:
  time_point now() override;
  void sleep_for(duration d) override;
  void advance(duration d);
  duration total_slept() const;

 private:
  mutable std::mutex mu_;
  time_point now_{};
  duration slept_{};
};

/// Sliding one-minute window limiter. acquire() blocks until a slot frees.
class RateLimiter {
 public:
  RateLimiter(int per_minute, std::shared_ptr<Clock> clock);

  void acquire();
  int per_minute() const { return per_minute_; }

  /// Process-wide limiter shared by every gateway using the same key.
  static std::shared_ptr<RateLimiter> shared(const std::string& key, int per_minute,
                                             std::shared_ptr<Clock> clock = nullptr);

 private:
  int per_minute_;
  std::shared_ptr<Clock> clock_;
  std::mutex mu_;
  std::deque<Clock::time_point> sent_;
};

// ---------------------------------------------------------------------------
// Transports: one attempt per call, no retries. Throw TransportError for
// transient failures, RateLimited for 429, ProtocolError for bad bodies.

class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string chat(const ChatRequest& request) = 0;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                                 const std::string& model) = 0;
  virtual std::string describe() const = 0;
};

/// OpenAI-compatible HTTP backend: POST {base_url}/chat/completions and
/// {base_url}/embeddings.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(BackendConfig config);

  std::string chat(const ChatRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                         const std::string& model) override;
  std::string describe() const override;

  /// Cheap reachability probe (GET {base_url}/models). False on any failure.
  bool reachable() const;

 private:
  std::string post(const std::string& path, const Json& body) const;

  BackendConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

/// Echoes the last user message; embeds by hashing bag-of-words tokens.
class EchoTransport final : public Transport {
 public:
  std::string chat(const ChatRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                         const std::string& model) override;
  std::string describe() const override { return "echo"; }
};

/// Deterministic bag-of-words embedding: FNV-hashed lowercase tokens into
/// `dims` buckets. Not normalized; the gateway normalizes.
std::vector<double> hashed_bow_embedding(const std::string& text, int dims = 256);

/// Test double driven by callables.
class ScriptedTransport final : public Transport {
 public:
  using ChatFn = std::function<std::string(const ChatRequest&)>;
  using EmbedFn = std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

  explicit ScriptedTransport(ChatFn chat, EmbedFn embed = nullptr);
  /// Replies from a fixed queue, cycling the last entry when exhausted.
  static std::shared_ptr<ScriptedTransport> from_replies(std::vector<std::string> replies);

  std::string chat(const ChatRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                         const std::string& model) override;
  std::string describe() const override { return "scripted"; }

  int chat_calls() const;
  int embed_calls() const;

 private:
  ChatFn chat_;
  EmbedFn embed_;
  mutable std::mutex mu_;
  int chat_calls_ = 0;
  int embed_calls_ = 0;
};

/// Replays recorded responses keyed by request content.
///
/// Fixture file: JSON object {"chat": [{"request": {...}, "response": "..."}],
/// "embed": [{"input": "...", "embedding": [...]}]}. Chat requests match on
/// model and message list; temperature is ignored.
class FixtureTransport final : public Transport {
 public:
  explicit FixtureTransport(const std::filesystem::path& path);
  explicit FixtureTransport(const Json& fixture);

  std::string chat(const ChatRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                         const std::string& model) override;
  std::string describe() const override { return "fixture"; }

  static std::string request_key(const ChatRequest& request);

 private:
  void load(const Json& fixture);

  std::map<std::string, std::string> chat_;
  std::map<std::string, std::vector<double>> embed_;
};

/// Forwards to an inner transport and records every exchange so a live run
/// can be replayed later with FixtureTransport.
class RecordingTransport final : public Transport {
 public:
  explicit RecordingTransport(std::shared_ptr<Transport> inner);

  std::string chat(const ChatRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                         const std::string& model) override;
  std::string describe() const override { return "recording(" + inner_->describe() + ")"; }

  Json fixture() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::shared_ptr<Transport> inner_;
  mutable std::mutex mu_;
  Json chat_ = Json::array();
  Json embed_ = Json::array();
};

// ---------------------------------------------------------------------------

struct GatewayOptions {
  std::string model;
  int retry_budget = 3;
  std::chrono::milliseconds initial_backoff{500};
  int requests_per_minute = 60;
  std::string limiter_key;  // defaults to the transport description
};

class Gateway {
 public:
  Gateway(std::shared_ptr<Transport> transport, GatewayOptions options,
          std::shared_ptr<Clock> clock = nullptr,
          std::shared_ptr<RateLimiter> limiter = nullptr);

  /// Builds the transport named by config.kind.
  static std::shared_ptr<Gateway> from_config(const BackendConfig& config);

  /// First assistant completion, truncated at any stop marker. Retries
  /// transient failures with exponential backoff.
  std::string chat(const ChatRequest& request);
  std::string chat(const std::vector<ChatMessage>& messages, double temperature,
                   int max_output_tokens = 1024);

  /// One L2-normalized vector per input. Throws std::invalid_argument on
  /// an empty list.
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);

  const std::string& model() const { return options_.model; }
  std::string describe() const { return transport_->describe(); }
  Transport& transport() { return *transport_; }

 private:
  template <typename F>
  auto with_retries(F&& attempt) -> decltype(attempt());

  std::shared_ptr<Transport> transport_;
  GatewayOptions options_;
  std::shared_ptr<Clock> clock_;
  std::shared_ptr<RateLimiter> limiter_;
};

std::vector<double> l2_normalize(std::vector<double> v);

}  // namespace dxenv
