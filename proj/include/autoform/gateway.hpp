#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "autoform/clock.hpp"
#include "autoform/errors.hpp"

namespace autoform {

using json = nlohmann::json;

enum class Role { translator, backtranslator, checker, judge, rater, prover };

std::string role_name(Role r);
std::optional<Role> role_from_name(const std::string& name);

struct ModelEndpoint {
  std::string model_name;
  std::string base_url;
  std::string auth_env;  // name of the env var holding the credential; empty = none
  int max_concurrent = 4;
  int requests_per_minute = 60;
  double default_temperature = 0.3;
  int default_max_tokens = 4096;
  std::int64_t request_timeout_ms = 600000;
};

struct ChatMessage {
  enum class Speaker { system, user } speaker = Speaker::user;
  std::string text;
};

struct ChatRequest {
  Role role = Role::translator;
  std::vector<ChatMessage> messages;
  double temperature = 0.3;
  int max_tokens = 4096;
  std::optional<std::int64_t> seed;
};

struct ChatResponse {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t latency_ms = 0;
};

struct RoleUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t request_count = 0;
  std::int64_t failure_count = 0;
};

struct UsageLedger {
  std::map<Role, RoleUsage> per_role;
  RoleUsage total;
  json to_json() const;
};

/// Failure a retry may fix. Anything else aborts the request immediately.
class RetryableError : public Error {
public:
  enum class Kind { timeout, rate_limited, server_error, connection };
  RetryableError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

struct BackendReply {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

class Backend {
public:
  virtual ~Backend() = default;
  virtual BackendReply send(const ModelEndpoint& endpoint, const ChatRequest& req,
                            const std::string& auth_token) = 0;
};

/// Talks the de-facto chat-completion HTTP schema, so any compatible
/// provider or local server works.
class HttpBackend : public Backend {
public:
  BackendReply send(const ModelEndpoint& endpoint, const ChatRequest& req,
                    const std::string& auth_token) override;

  /// Request body for one chat call; exposed for tests.
  static json request_body(const ModelEndpoint& endpoint, const ChatRequest& req);
};

/// Deterministic offline backend: canned responses selected by substring
/// match against the concatenated message text, in file order. Optional
/// per-entry seed and role constraints let fixtures target one sample or
/// one pipeline stage. Unmatched requests raise ScriptMiss.
class ScriptedBackend : public Backend {
public:
  struct Entry {
    std::vector<std::string> match;  // all substrings must occur in the prompt
    std::optional<std::int64_t> seed;
    std::optional<std::string> role;
    std::string response;
    std::int64_t prompt_tokens = -1;      // -1: estimate from prompt length
    std::int64_t completion_tokens = -1;  // -1: estimate from response length
  };

  explicit ScriptedBackend(std::vector<Entry> entries);

  static std::shared_ptr<ScriptedBackend> from_json(const json& spec);
  static std::shared_ptr<ScriptedBackend> from_file(const std::string& path);

  BackendReply send(const ModelEndpoint& endpoint, const ChatRequest& req,
                    const std::string& auth_token) override;

  /// Prompt text a request resolves against: message texts joined by newlines.
  static std::string prompt_text(const ChatRequest& req);

  std::int64_t call_count() const;
  std::vector<std::pair<std::string, std::string>> served() const;  // (role, prompt)

private:
  std::vector<Entry> entries_;
  mutable std::mutex mu_;
  std::vector<std::pair<std::string, std::string>> served_;
};

struct RetryPolicy {
  int max_retries = 4;
  std::int64_t base_delay_ms = 1000;  // delay = base * 2^attempt + jitter
  std::int64_t max_delay_ms = 30000;
  std::int64_t jitter_ms = 250;
};

struct GatewayConfig {
  std::map<Role, ModelEndpoint> endpoints;
  RetryPolicy retry;
  std::uint64_t jitter_seed = 0;

  static GatewayConfig from_json(const json& j);
  /// Offline defaults with every role bound to one scripted endpoint.
  static GatewayConfig offline_defaults();
};

/// Thread-safe chat-completion client shared by all pipeline workers.
/// Requests pass a per-endpoint concurrency gate and sliding-window rate
/// limiter; transient failures retry with exponential backoff and jitter;
/// usage lands in the ledger. Roles sharing one endpoint share its limits.
class Gateway {
public:
  Gateway(GatewayConfig cfg, std::shared_ptr<Backend> backend, Clock& clock = system_clock());
  ~Gateway();

  ChatResponse complete(const ChatRequest& req);

  /// Request pre-filled with the role's configured defaults.
  ChatRequest new_request(Role role) const;

  UsageLedger usage_totals() const;

  /// Test hook: feed a synthetic usage record straight into the ledger.
  void record_synthetic_usage(Role role, std::int64_t prompt_tokens,
                              std::int64_t completion_tokens);

  const GatewayConfig& config() const { return cfg_; }

private:
  struct EndpointState;

  EndpointState& state_for(Role role);
  const ModelEndpoint& endpoint_for(Role role) const;
  std::int64_t backoff_delay_ms(int attempt);
  void record_success(Role role, const BackendReply& reply);
  void record_failure(Role role);

  GatewayConfig cfg_;
  std::shared_ptr<Backend> backend_;
  Clock& clock_;

  std::vector<std::unique_ptr<EndpointState>> states_;
  std::map<Role, std::size_t> role_state_;

  mutable std::mutex ledger_mu_;
  UsageLedger ledger_;

  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

}  // namespace autoform
