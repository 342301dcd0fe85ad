#include "autoform/gateway.hpp"

#include <algorithm>
#include <cstdlib>

#include <httplib.h>

#include "autoform/jsonl.hpp"

namespace autoform {
namespace {

constexpr std::int64_t kWindowMs = 60000;

struct ParsedUrl {
  std::string host_port;  // scheme://host[:port]
  std::string path_prefix;
};

ParsedUrl parse_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = base_url.find('/', host_start);
  if (path_start == std::string::npos) {
    return {base_url, ""};
  }
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

std::string speaker_name(ChatMessage::Speaker s) {
  return s == ChatMessage::Speaker::system ? "system" : "user";
}

}  // namespace

std::string role_name(Role r) {
  switch (r) {
    case Role::translator: return "translator";
    case Role::backtranslator: return "backtranslator";
    case Role::checker: return "checker";
    case Role::judge: return "judge";
    case Role::rater: return "rater";
    case Role::prover: return "prover";
  }
  return "translator";
}

std::optional<Role> role_from_name(const std::string& name) {
  if (name == "translator") return Role::translator;
  if (name == "backtranslator") return Role::backtranslator;
  if (name == "checker") return Role::checker;
  if (name == "judge") return Role::judge;
  if (name == "rater") return Role::rater;
  if (name == "prover") return Role::prover;
  return std::nullopt;
}

json UsageLedger::to_json() const {
  json roles = json::object();
  for (const auto& [role, usage] : per_role) {
    roles[role_name(role)] = {{"prompt_tokens", usage.prompt_tokens},
                              {"completion_tokens", usage.completion_tokens},
                              {"request_count", usage.request_count},
                              {"failure_count", usage.failure_count}};
  }
  return {{"per_role", roles},
          {"total",
           {{"prompt_tokens", total.prompt_tokens},
            {"completion_tokens", total.completion_tokens},
            {"request_count", total.request_count},
            {"failure_count", total.failure_count}}}};
}

// ---------------------------------------------------------------------------
// HTTP backend

json HttpBackend::request_body(const ModelEndpoint& endpoint, const ChatRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages) {
    messages.push_back({{"role", speaker_name(m.speaker)}, {"content", m.text}});
  }
  json body = {{"model", endpoint.model_name},
               {"messages", messages},
               {"temperature", req.temperature},
               {"max_tokens", req.max_tokens}};
  if (req.seed.has_value()) body["seed"] = *req.seed;
  return body;
}

BackendReply HttpBackend::send(const ModelEndpoint& endpoint, const ChatRequest& req,
                               const std::string& auth_token) {
  ParsedUrl url = parse_base_url(endpoint.base_url);
  httplib::Client client(url.host_port);
  auto timeout_s = std::max<std::int64_t>(1, endpoint.request_timeout_ms / 1000);
  client.set_connection_timeout(timeout_s, 0);
  client.set_read_timeout(timeout_s, 0);
  client.set_write_timeout(timeout_s, 0);

  httplib::Headers headers;
  if (!auth_token.empty()) {
    headers.emplace("Authorization", "Bearer " + auth_token);
  }

  std::string body = request_body(endpoint, req).dump();
  auto res = client.Post(url.path_prefix + "/chat/completions", headers, body,
                         "application/json");
  if (!res) {
    auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
        err == httplib::Error::Write) {
      throw RetryableError(RetryableError::Kind::timeout,
                           "request timed out: " + httplib::to_string(err));
    }
    throw RetryableError(RetryableError::Kind::connection,
                         "connection failed: " + httplib::to_string(err));
  }
  if (res->status == 429) {
    throw RetryableError(RetryableError::Kind::rate_limited, "HTTP 429");
  }
  if (res->status == 408) {
    throw RetryableError(RetryableError::Kind::timeout, "HTTP 408");
  }
  if (res->status >= 500) {
    throw RetryableError(RetryableError::Kind::server_error,
                         "HTTP " + std::to_string(res->status));
  }
  if (res->status >= 400) {
    throw BackendError("HTTP " + std::to_string(res->status) + ": " + res->body);
  }

  json payload = json::parse(res->body, nullptr, false);
  if (payload.is_discarded() || !payload.is_object()) {
    throw BackendError("unparseable completion response");
  }
  BackendReply reply;
  try {
    reply.text = payload.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw BackendError("completion response missing choices[0].message.content");
  }
  if (payload.contains("usage") && payload["usage"].is_object()) {
    reply.prompt_tokens = payload["usage"].value("prompt_tokens", std::int64_t{0});
    reply.completion_tokens = payload["usage"].value("completion_tokens", std::int64_t{0});
  }
  return reply;
}

// ---------------------------------------------------------------------------
// Scripted backend

ScriptedBackend::ScriptedBackend(std::vector<Entry> entries) : entries_(std::move(entries)) {}

std::string ScriptedBackend::prompt_text(const ChatRequest& req) {
  std::string out;
  for (const auto& m : req.messages) {
    if (!out.empty()) out += "\n";
    out += m.text;
  }
  return out;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& spec) {
  const json* list = &spec;
  if (spec.is_object() && spec.contains("entries")) list = &spec["entries"];
  if (!list->is_array()) throw Error("scripted backend spec must be an array of entries");
  std::vector<Entry> entries;
  for (const auto& item : *list) {
    Entry e;
    const json& match = item.at("match");
    if (match.is_string()) {
      e.match.push_back(match.get<std::string>());
    } else if (match.is_array()) {
      for (const auto& m : match) e.match.push_back(m.get<std::string>());
    } else {
      throw Error("scripted entry match must be a string or array of strings");
    }
    if (item.contains("seed")) e.seed = item["seed"].get<std::int64_t>();
    if (item.contains("role")) e.role = item["role"].get<std::string>();
    e.response = item.at("response").get<std::string>();
    e.prompt_tokens = item.value("prompt_tokens", std::int64_t{-1});
    e.completion_tokens = item.value("completion_tokens", std::int64_t{-1});
    entries.push_back(std::move(e));
  }
  return std::make_shared<ScriptedBackend>(std::move(entries));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::string& path) {
  json spec = json::parse(read_file(path), nullptr, false);
  if (spec.is_discarded()) throw Error("invalid JSON in script file: " + path);
  return from_json(spec);
}

BackendReply ScriptedBackend::send(const ModelEndpoint&, const ChatRequest& req,
                                   const std::string&) {
  std::string prompt = prompt_text(req);
  {
    std::lock_guard<std::mutex> lock(mu_);
    served_.emplace_back(role_name(req.role), prompt);
  }
  for (const auto& e : entries_) {
    if (e.seed.has_value() && (!req.seed.has_value() || *req.seed != *e.seed)) continue;
    if (e.role.has_value() && *e.role != role_name(req.role)) continue;
    bool all = std::all_of(e.match.begin(), e.match.end(), [&](const std::string& m) {
      return prompt.find(m) != std::string::npos;
    });
    if (!all) continue;
    BackendReply reply;
    reply.text = e.response;
    reply.prompt_tokens = e.prompt_tokens >= 0
                              ? e.prompt_tokens
                              : static_cast<std::int64_t>(prompt.size() / 4);
    reply.completion_tokens = e.completion_tokens >= 0
                                  ? e.completion_tokens
                                  : static_cast<std::int64_t>(e.response.size() / 4);
    return reply;
  }
  throw ScriptMiss("no scripted response for prompt: " +
                   prompt.substr(0, std::min<std::size_t>(160, prompt.size())));
}

std::int64_t ScriptedBackend::call_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return static_cast<std::int64_t>(served_.size());
}

std::vector<std::pair<std::string, std::string>> ScriptedBackend::served() const {
  std::lock_guard<std::mutex> lock(mu_);
  return served_;
}

// ---------------------------------------------------------------------------
// Gateway

GatewayConfig GatewayConfig::from_json(const json& j) {
  GatewayConfig cfg = GatewayConfig::offline_defaults();
  if (j.contains("endpoints")) {
    for (const auto& [name, spec] : j["endpoints"].items()) {
      auto role = role_from_name(name);
      if (!role.has_value()) throw Error("unknown endpoint role: " + name);
      ModelEndpoint ep = cfg.endpoints[*role];
      ep.model_name = spec.value("model_name", ep.model_name);
      ep.base_url = spec.value("base_url", ep.base_url);
      ep.auth_env = spec.value("auth_env", ep.auth_env);
      ep.max_concurrent = spec.value("max_concurrent", ep.max_concurrent);
      ep.requests_per_minute = spec.value("requests_per_minute", ep.requests_per_minute);
      ep.default_temperature = spec.value("temperature", ep.default_temperature);
      ep.default_max_tokens = spec.value("max_tokens", ep.default_max_tokens);
      ep.request_timeout_ms = spec.value("request_timeout_ms", ep.request_timeout_ms);
      cfg.endpoints[*role] = ep;
    }
  }
  if (j.contains("retry")) {
    const json& r = j["retry"];
    cfg.retry.max_retries = r.value("max_retries", cfg.retry.max_retries);
    cfg.retry.base_delay_ms = r.value("base_delay_ms", cfg.retry.base_delay_ms);
    cfg.retry.max_delay_ms = r.value("max_delay_ms", cfg.retry.max_delay_ms);
    cfg.retry.jitter_ms = r.value("jitter_ms", cfg.retry.jitter_ms);
  }
  cfg.jitter_seed = j.value("jitter_seed", cfg.jitter_seed);
  return cfg;
}

GatewayConfig GatewayConfig::offline_defaults() {
  GatewayConfig cfg;
  for (Role role : {Role::translator, Role::backtranslator, Role::checker, Role::judge,
                    Role::rater, Role::prover}) {
    ModelEndpoint ep;
    ep.model_name = "offline";
    ep.base_url = "http://localhost:0";
    ep.max_concurrent = 16;
    ep.requests_per_minute = 100000;
    if (role == Role::translator || role == Role::prover) {
      ep.default_temperature = 1.0;
      ep.default_max_tokens = 8192;
    }
    cfg.endpoints[role] = ep;
  }
  return cfg;
}

struct Gateway::EndpointState {
  ModelEndpoint endpoint;
  std::mutex mu;
  std::condition_variable cv;
  int in_flight = 0;
  std::deque<std::int64_t> issued;

  explicit EndpointState(ModelEndpoint ep) : endpoint(std::move(ep)) {}

  void acquire_slot() {
    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [&] { return in_flight < endpoint.max_concurrent; });
    ++in_flight;
  }

  void release_slot() {
    {
      std::lock_guard<std::mutex> lock(mu);
      --in_flight;
    }
    cv.notify_one();
  }

  // sliding window: at most requests_per_minute issues in any 60s span
  void rate_limit(Clock& clock) {
    for (;;) {
      std::int64_t wait = 0;
      {
        std::lock_guard<std::mutex> lock(mu);
        std::int64_t now = clock.now_ms();
        while (!issued.empty() && issued.front() <= now - kWindowMs) issued.pop_front();
        if (static_cast<int>(issued.size()) < endpoint.requests_per_minute) {
          issued.push_back(now);
          return;
        }
        wait = issued.front() + kWindowMs - now;
      }
      clock.sleep_ms(std::max<std::int64_t>(wait, 1));
    }
  }
};

Gateway::Gateway(GatewayConfig cfg, std::shared_ptr<Backend> backend, Clock& clock)
    : cfg_(std::move(cfg)), backend_(std::move(backend)), clock_(clock),
      rng_(cfg_.jitter_seed) {
  // roles with identical endpoints share one limiter and concurrency gate
  for (const auto& [role, ep] : cfg_.endpoints) {
    std::size_t idx = states_.size();
    for (std::size_t i = 0; i < states_.size(); ++i) {
      const ModelEndpoint& other = states_[i]->endpoint;
      if (other.base_url == ep.base_url && other.model_name == ep.model_name &&
          other.auth_env == ep.auth_env) {
        idx = i;
        break;
      }
    }
    if (idx == states_.size()) {
      states_.push_back(std::make_unique<EndpointState>(ep));
    }
    role_state_[role] = idx;
  }
}

Gateway::~Gateway() = default;

Gateway::EndpointState& Gateway::state_for(Role role) {
  auto it = role_state_.find(role);
  if (it == role_state_.end()) {
    throw Error("no endpoint configured for role: " + role_name(role));
  }
  return *states_[it->second];
}

const ModelEndpoint& Gateway::endpoint_for(Role role) const {
  auto it = cfg_.endpoints.find(role);
  if (it == cfg_.endpoints.end()) {
    throw Error("no endpoint configured for role: " + role_name(role));
  }
  return it->second;
}

ChatRequest Gateway::new_request(Role role) const {
  const ModelEndpoint& ep = endpoint_for(role);
  ChatRequest req;
  req.role = role;
  req.temperature = ep.default_temperature;
  req.max_tokens = ep.default_max_tokens;
  return req;
}

std::int64_t Gateway::backoff_delay_ms(int attempt) {
  std::int64_t delay = cfg_.retry.base_delay_ms << attempt;
  delay = std::min(delay, cfg_.retry.max_delay_ms);
  if (cfg_.retry.jitter_ms > 0) {
    std::lock_guard<std::mutex> lock(rng_mu_);
    delay += static_cast<std::int64_t>(rng_() % static_cast<std::uint64_t>(cfg_.retry.jitter_ms));
  }
  return delay;
}

void Gateway::record_success(Role role, const BackendReply& reply) {
  std::lock_guard<std::mutex> lock(ledger_mu_);
  RoleUsage& usage = ledger_.per_role[role];
  usage.prompt_tokens += reply.prompt_tokens;
  usage.completion_tokens += reply.completion_tokens;
  usage.request_count += 1;
  ledger_.total.prompt_tokens += reply.prompt_tokens;
  ledger_.total.completion_tokens += reply.completion_tokens;
  ledger_.total.request_count += 1;
}

void Gateway::record_failure(Role role) {
  std::lock_guard<std::mutex> lock(ledger_mu_);
  ledger_.per_role[role].failure_count += 1;
  ledger_.per_role[role].request_count += 1;
  ledger_.total.failure_count += 1;
  ledger_.total.request_count += 1;
}

void Gateway::record_synthetic_usage(Role role, std::int64_t prompt_tokens,
                                     std::int64_t completion_tokens) {
  BackendReply reply;
  reply.prompt_tokens = prompt_tokens;
  reply.completion_tokens = completion_tokens;
  record_success(role, reply);
}

ChatResponse Gateway::complete(const ChatRequest& req) {
  if (req.messages.empty()) throw Error("chat request has no messages");
  bool has_user = std::any_of(req.messages.begin(), req.messages.end(), [](const auto& m) {
    return m.speaker == ChatMessage::Speaker::user;
  });
  if (!has_user) throw Error("chat request needs at least one user message");
  if (!std::isfinite(req.temperature)) throw Error("chat request temperature not finite");

  const ModelEndpoint& ep = endpoint_for(req.role);
  std::string auth_token;
  if (!ep.auth_env.empty()) {
    const char* value = std::getenv(ep.auth_env.c_str());
    if (value == nullptr || *value == '\0') {
      throw AuthMissing("credential environment variable not set: " + ep.auth_env);
    }
    auth_token = value;
  }

  EndpointState& state = state_for(req.role);
  state.acquire_slot();
  struct SlotGuard {
    EndpointState& s;
    ~SlotGuard() { s.release_slot(); }
  } guard{state};

  int attempt = 0;
  for (;;) {
    state.rate_limit(clock_);
    std::int64_t t0 = clock_.now_ms();
    try {
      BackendReply reply = backend_->send(ep, req, auth_token);
      ChatResponse resp;
      resp.text = reply.text;
      resp.prompt_tokens = reply.prompt_tokens;
      resp.completion_tokens = reply.completion_tokens;
      resp.latency_ms = std::max<std::int64_t>(0, clock_.now_ms() - t0);
      record_success(req.role, reply);
      return resp;
    } catch (const RetryableError& e) {
      if (attempt >= cfg_.retry.max_retries) {
        record_failure(req.role);
        switch (e.kind()) {
          case RetryableError::Kind::timeout:
            throw TimeoutError(std::string("retries exhausted: ") + e.what());
          case RetryableError::Kind::rate_limited:
            throw RateLimitedExhausted(std::string("retries exhausted: ") + e.what());
          default:
            throw BackendError(std::string("retries exhausted: ") + e.what());
        }
      }
      clock_.sleep_ms(backoff_delay_ms(attempt));
      ++attempt;
    } catch (...) {
      record_failure(req.role);
      throw;
    }
  }
}

UsageLedger Gateway::usage_totals() const {
  std::lock_guard<std::mutex> lock(ledger_mu_);
  return ledger_;
}

}  // namespace autoform
