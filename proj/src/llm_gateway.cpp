#include "dxenv/llm_gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "dxenv/rng.hpp"
#include "dxenv/text_util.hpp"
#include "httplib.h"

namespace dxenv {

void to_json(Json& j, const ChatMessage& m) {
  j = Json{{"role", m.role}, {"content", m.content}};
}

void from_json(const Json& j, ChatMessage& m) {
  m.role = j.at("role").get<std::string>();
  m.content = j.at("content").get<std::string>();
}

void validate_request(const ChatRequest& request) {
  if (request.messages.empty()) throw std::invalid_argument("chat request has no messages");
  if (!(request.temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (request.max_output_tokens <= 0) throw std::invalid_argument("max_output_tokens must be positive");
  for (const auto& m : request.messages) {
    if (m.role != "system" && m.role != "user" && m.role != "assistant" && m.role != "tool") {
      throw std::invalid_argument("unknown message role: " + m.role);
    }
  }
}

std::string apply_stop_markers(std::string text, const std::vector<std::string>& markers) {
  std::size_t cut = std::string::npos;
  for (const auto& m : markers) {
    if (m.empty()) continue;
    cut = std::min(cut, text.find(m));
  }
  if (cut != std::string::npos) text.erase(cut);
  return text;
}

void BackendConfig::validate() const {
  if (retry_budget < 0) throw std::invalid_argument("retry_budget must be >= 0");
  if (requests_per_minute <= 0) throw std::invalid_argument("requests_per_minute must be > 0");
  if (!(timeout_seconds > 0.0)) throw std::invalid_argument("timeout_seconds must be > 0");
  if (kind == "http" && base_url.empty()) throw std::invalid_argument("http backend needs base_url");
  if (kind == "fixture" && fixture_path.empty()) throw std::invalid_argument("fixture backend needs fixture_path");
  if (kind != "http" && kind != "echo" && kind != "hash" && kind != "fixture") {
    throw std::invalid_argument("unknown backend kind: " + kind);
  }
}

BackendConfig backend_config_from_json(const Json& j) {
  BackendConfig c;
  c.kind = j.value("kind", c.kind);
  c.base_url = j.value("base_url", c.base_url);
  c.model = j.value("model", c.model);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.retry_budget = j.value("retry_budget", c.retry_budget);
  c.requests_per_minute = j.value("requests_per_minute", c.requests_per_minute);
  c.initial_backoff = std::chrono::milliseconds(
      j.value("initial_backoff_ms", static_cast<long long>(c.initial_backoff.count())));
  c.temperature = j.value("temperature", c.temperature);
  c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
  c.fixture_path = j.value("fixture_path", c.fixture_path);
  c.validate();
  return c;
}

Json to_json(const BackendConfig& c) {
  return Json{{"kind", c.kind},
              {"base_url", c.base_url},
              {"model", c.model},
              {"api_key_env", c.api_key_env},
              {"timeout_seconds", c.timeout_seconds},
              {"retry_budget", c.retry_budget},
              {"requests_per_minute", c.requests_per_minute},
              {"initial_backoff_ms", c.initial_backoff.count()},
              {"temperature", c.temperature},
              {"max_output_tokens", c.max_output_tokens},
              {"fixture_path", c.fixture_path}};
}

// ---------------------------------------------------------------------------

Clock::time_point SystemClock::now() { return std::chrono::steady_clock::now(); }

void SystemClock::sleep_for(duration d) { std::this_thread::sleep_for(d); }

std::shared_ptr<Clock> SystemClock::instance() {
  static auto clock = std::make_shared<SystemClock>();
  return clock;
}

Clock::time_point ManualClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void ManualClock::sleep_for(duration d) {
  std::lock_guard lock(mu_);
  if (d.count() > 0) {
    now_ += d;
    slept_ += d;
  }
}

void ManualClock::advance(duration d) {
  std::lock_guard lock(mu_);
  now_ += d;
}

Clock::duration ManualClock::total_slept() const {
  std::lock_guard lock(mu_);
  return slept_;
}

RateLimiter::RateLimiter(int per_minute, std::shared_ptr<Clock> clock)
    : per_minute_(per_minute), clock_(clock ? std::move(clock) : SystemClock::instance()) {
  if (per_minute_ <= 0) throw std::invalid_argument("rate limit must be positive");
}

void RateLimiter::acquire() {
  constexpr auto window = std::chrono::minutes(1);
  std::lock_guard lock(mu_);
  for (;;) {
    const auto now = clock_->now();
    while (!sent_.empty() && now - sent_.front() >= window) sent_.pop_front();
    if (static_cast<int>(sent_.size()) < per_minute_) {
      sent_.push_back(now);
      return;
    }
    // Holding the lock while waiting keeps callers in FIFO-ish order.
    clock_->sleep_for(sent_.front() + window - now);
  }
}

std::shared_ptr<RateLimiter> RateLimiter::shared(const std::string& key, int per_minute,
                                                 std::shared_ptr<Clock> clock) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<RateLimiter>> registry;
  std::lock_guard lock(mu);
  auto& slot = registry[key];
  if (!slot) {
    slot = std::make_shared<RateLimiter>(per_minute, std::move(clock));
  } else if (slot->per_minute() != per_minute) {
    spdlog::warn("rate limiter '{}' already exists with cap {}; ignoring cap {}", key,
                 slot->per_minute(), per_minute);
  }
  return slot;
}

// ---------------------------------------------------------------------------

namespace {

Json messages_json(const std::vector<ChatMessage>& messages) {
  Json arr = Json::array();
  for (const auto& m : messages) arr.push_back(m);
  return arr;
}

}  // namespace

HttpTransport::HttpTransport(BackendConfig config) : config_(std::move(config)) {
  std::string url = config_.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_port_ = url;
  } else {
    scheme_host_port_ = url.substr(0, path_start);
    path_prefix_ = url.substr(path_start);
  }
}

std::string HttpTransport::describe() const {
  return "http:" + config_.base_url + "#" + config_.model;
}

std::string HttpTransport::post(const std::string& path, const Json& body) const {
  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  auto res = client.Post(path_prefix_ + path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("POST " + path + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429) throw RateLimited("backend returned 429");
  if (res->status >= 500) {
    throw TransportError("backend returned HTTP " + std::to_string(res->status));
  }
  if (res->status >= 400) {
    throw ProtocolError("backend returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  return res->body;
}

std::string HttpTransport::chat(const ChatRequest& request) {
  Json body{{"model", request.model_id.empty() ? config_.model : request.model_id},
            {"messages", messages_json(request.messages)},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens}};
  if (!request.stop_markers.empty()) body["stop"] = request.stop_markers;

  const std::string raw = post("/chat/completions", body);
  try {
    const Json resp = Json::parse(raw);
    const auto& content = resp.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const Json::exception& e) {
    throw ProtocolError(std::string("malformed chat completion body: ") + e.what());
  }
}

std::vector<std::vector<double>> HttpTransport::embed(const std::vector<std::string>& texts,
                                                      const std::string& model) {
  Json body{{"model", model.empty() ? config_.model : model}, {"input", texts}};
  const std::string raw = post("/embeddings", body);
  try {
    const Json resp = Json::parse(raw);
    const auto& data = resp.at("data");
    std::vector<std::vector<double>> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t idx = data[i].value("index", i);
      if (idx >= out.size()) throw ProtocolError("embedding index out of range");
      out[idx] = data[i].at("embedding").get<std::vector<double>>();
    }
    return out;
  } catch (const Json::exception& e) {
    throw ProtocolError(std::string("malformed embeddings body: ") + e.what());
  }
}

bool HttpTransport::reachable() const {
  try {
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(std::chrono::seconds(5));
    client.set_read_timeout(std::chrono::seconds(5));
    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
      if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
      }
    }
    auto res = client.Get(path_prefix_ + "/models", headers);
    return res && res->status < 500;
  } catch (...) {
    return false;
  }
}

// ---------------------------------------------------------------------------

std::vector<double> hashed_bow_embedding(const std::string& text, int dims) {
  std::vector<double> v(static_cast<std::size_t>(dims), 0.0);
  const auto tokens = text::words(text);
  if (tokens.empty()) {
    v[0] = 1.0;
    return v;
  }
  for (const auto& t : tokens) v[fnv1a64(t) % static_cast<std::uint64_t>(dims)] += 1.0;
  return v;
}

std::string EchoTransport::chat(const ChatRequest& request) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == "user") return it->content;
  }
  return {};
}

std::vector<std::vector<double>> EchoTransport::embed(const std::vector<std::string>& texts,
                                                      const std::string&) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hashed_bow_embedding(t));
  return out;
}

ScriptedTransport::ScriptedTransport(ChatFn chat, EmbedFn embed)
    : chat_(std::move(chat)), embed_(std::move(embed)) {}

std::shared_ptr<ScriptedTransport> ScriptedTransport::from_replies(std::vector<std::string> replies) {
  if (replies.empty()) throw std::invalid_argument("from_replies needs at least one reply");
  auto state = std::make_shared<std::pair<std::mutex, std::size_t>>();
  auto shared_replies = std::make_shared<std::vector<std::string>>(std::move(replies));
  return std::make_shared<ScriptedTransport>([state, shared_replies](const ChatRequest&) {
    std::lock_guard lock(state->first);
    const std::size_t i = std::min(state->second, shared_replies->size() - 1);
    ++state->second;
    return (*shared_replies)[i];
  });
}

std::string ScriptedTransport::chat(const ChatRequest& request) {
  {
    std::lock_guard lock(mu_);
    ++chat_calls_;
  }
  if (!chat_) throw ProtocolError("scripted transport has no chat handler");
  return chat_(request);
}

std::vector<std::vector<double>> ScriptedTransport::embed(const std::vector<std::string>& texts,
                                                          const std::string&) {
  {
    std::lock_guard lock(mu_);
    ++embed_calls_;
  }
  if (!embed_) {
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) out.push_back(hashed_bow_embedding(t));
    return out;
  }
  return embed_(texts);
}

int ScriptedTransport::chat_calls() const {
  std::lock_guard lock(mu_);
  return chat_calls_;
}

int ScriptedTransport::embed_calls() const {
  std::lock_guard lock(mu_);
  return embed_calls_;
}

FixtureTransport::FixtureTransport(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture file: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw SchemaError("fixture " + path.string() + ": " + e.what());
  }
  load(j);
}

FixtureTransport::FixtureTransport(const Json& fixture) { load(fixture); }

void FixtureTransport::load(const Json& fixture) {
  try {
    for (const auto& entry : fixture.value("chat", Json::array())) {
      ChatRequest req;
      req.model_id = entry.at("request").value("model", "");
      req.messages = entry.at("request").at("messages").get<std::vector<ChatMessage>>();
      chat_[request_key(req)] = entry.at("response").get<std::string>();
    }
    for (const auto& entry : fixture.value("embed", Json::array())) {
      embed_[entry.at("input").get<std::string>()] =
          entry.at("embedding").get<std::vector<double>>();
    }
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("fixture: ") + e.what());
  }
}

std::string FixtureTransport::request_key(const ChatRequest& request) {
  return Json{{"model", request.model_id}, {"messages", messages_json(request.messages)}}.dump();
}

std::string FixtureTransport::chat(const ChatRequest& request) {
  auto it = chat_.find(request_key(request));
  if (it == chat_.end()) throw ProtocolError("no fixture recorded for this chat request");
  return it->second;
}

std::vector<std::vector<double>> FixtureTransport::embed(const std::vector<std::string>& texts,
                                                         const std::string&) {
  std::vector<std::vector<double>> out;
  for (const auto& t : texts) {
    auto it = embed_.find(t);
    if (it == embed_.end()) throw ProtocolError("no fixture embedding for input: " + t);
    out.push_back(it->second);
  }
  return out;
}

RecordingTransport::RecordingTransport(std::shared_ptr<Transport> inner) : inner_(std::move(inner)) {}

std::string RecordingTransport::chat(const ChatRequest& request) {
  std::string reply = inner_->chat(request);
  std::lock_guard lock(mu_);
  chat_.push_back({{"request", {{"model", request.model_id}, {"messages", messages_json(request.messages)}}},
                   {"response", reply}});
  return reply;
}

std::vector<std::vector<double>> RecordingTransport::embed(const std::vector<std::string>& texts,
                                                           const std::string& model) {
  auto vectors = inner_->embed(texts, model);
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < texts.size() && i < vectors.size(); ++i) {
    embed_.push_back({{"input", texts[i]}, {"embedding", vectors[i]}});
  }
  return vectors;
}

Json RecordingTransport::fixture() const {
  std::lock_guard lock(mu_);
  return Json{{"chat", chat_}, {"embed", embed_}};
}

void RecordingTransport::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write fixture: " + path.string());
  out << fixture().dump(2) << '\n';
}

// ---------------------------------------------------------------------------

std::vector<double> l2_normalize(std::vector<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ProtocolError("cannot normalize a zero or non-finite vector");
  for (double& x : v) x /= norm;
  return v;
}

Gateway::Gateway(std::shared_ptr<Transport> transport, GatewayOptions options,
                 std::shared_ptr<Clock> clock, std::shared_ptr<RateLimiter> limiter)
    : transport_(std::move(transport)),
      options_(std::move(options)),
      clock_(clock ? std::move(clock) : SystemClock::instance()),
      limiter_(std::move(limiter)) {
  if (!transport_) throw std::invalid_argument("gateway needs a transport");
  if (options_.retry_budget < 0) throw std::invalid_argument("retry_budget must be >= 0");
  if (!limiter_) {
    const std::string key = options_.limiter_key.empty() ? transport_->describe() : options_.limiter_key;
    limiter_ = RateLimiter::shared(key, options_.requests_per_minute, clock_);
  }
}

std::shared_ptr<Gateway> Gateway::from_config(const BackendConfig& config) {
  config.validate();
  std::shared_ptr<Transport> transport;
  if (config.kind == "http") {
    transport = std::make_shared<HttpTransport>(config);
  } else if (config.kind == "fixture") {
    transport = std::make_shared<FixtureTransport>(std::filesystem::path(config.fixture_path));
  } else {
    transport = std::make_shared<EchoTransport>();
  }
  GatewayOptions opts;
  opts.model = config.model;
  opts.retry_budget = config.retry_budget;
  opts.initial_backoff = config.initial_backoff;
  opts.requests_per_minute = config.requests_per_minute;
  opts.limiter_key = config.kind + ":" + config.base_url;
  return std::make_shared<Gateway>(std::move(transport), opts);
}

template <typename F>
auto Gateway::with_retries(F&& attempt) -> decltype(attempt()) {
  auto backoff = std::chrono::duration_cast<Clock::duration>(options_.initial_backoff);
  for (int tries = 0;; ++tries) {
    limiter_->acquire();
    try {
      return attempt();
    } catch (const RateLimited& e) {
      if (tries >= options_.retry_budget) throw;
      spdlog::debug("rate limited ({}), retry {} of {}", e.what(), tries + 1, options_.retry_budget);
    } catch (const TransportError& e) {
      if (tries >= options_.retry_budget) throw;
      spdlog::debug("transport error ({}), retry {} of {}", e.what(), tries + 1, options_.retry_budget);
    }
    clock_->sleep_for(backoff);
    backoff *= 2;
  }
}

std::string Gateway::chat(const ChatRequest& request) {
  validate_request(request);
  ChatRequest req = request;
  if (req.model_id.empty()) req.model_id = options_.model;
  std::string text = with_retries([&] { return transport_->chat(req); });
  return apply_stop_markers(std::move(text), req.stop_markers);
}

std::string Gateway::chat(const std::vector<ChatMessage>& messages, double temperature,
                          int max_output_tokens) {
  ChatRequest req;
  req.model_id = options_.model;
  req.messages = messages;
  req.temperature = temperature;
  req.max_output_tokens = max_output_tokens;
  return chat(req);
}

std::vector<std::vector<double>> Gateway::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw std::invalid_argument("embed needs at least one input");
  auto vectors = with_retries([&] { return transport_->embed(texts, options_.model); });
  if (vectors.size() != texts.size()) {
    throw ProtocolError("backend returned " + std::to_string(vectors.size()) + " embeddings for " +
                        std::to_string(texts.size()) + " inputs");
  }
  for (auto& v : vectors) v = l2_normalize(std::move(v));
  return vectors;
}

}  // namespace dxenv
