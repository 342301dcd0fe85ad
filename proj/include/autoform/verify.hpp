#pragma once

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autoform/errors.hpp"

namespace autoform {

using json = nlohmann::json;

enum class VerifyStatus { pass, pass_with_sorry, error, timeout, crash };

std::string verify_status_name(VerifyStatus s);
std::optional<VerifyStatus> verify_status_from_name(const std::string& name);

enum class Severity { error, warning, info };

std::string severity_name(Severity s);

struct ReplMessage {
  Severity severity = Severity::info;
  int line = 0;
  int column = 0;
  std::string text;
};

struct VerificationResult {
  VerifyStatus status = VerifyStatus::crash;
  std::vector<ReplMessage> messages;
  std::int64_t elapsed_ms = 0;
  std::string raw;  // raw response text, preserved when undecodable

  json to_json() const;
  static VerificationResult from_json(const json& j);
};

struct ReplConfig {
  std::string launch_command;  // program + args, shell-like quoting
  std::string working_dir = ".";
  double startup_timeout_s = 600.0;
  double check_timeout_s = 120.0;
  std::string header = "import Mathlib";
};

/// Wire form of one command: a single-line JSON object followed by a blank line.
std::string encode_repl_request(const std::string& source);

/// Pure classification of a parsed response object: error when any message
/// has error severity, otherwise pass_with_sorry when the sorries list is
/// non-empty or a warning carries the sorry marker, otherwise pass.
VerificationResult classify_messages(const json& raw_response);

/// Parse + classify; undecodable text yields status crash with the raw
/// bytes preserved.
VerificationResult classify_response_text(const std::string& raw);

/// Formats error diagnostics for feedback prompts, one "line L, col C: text"
/// per error; timeout and crash results get a fixed synthetic line.
std::string summarize_errors(const VerificationResult& r);

/// One REPL child process. A session accepts one in-flight command at a time.
class ReplSession {
public:
  explicit ReplSession(const ReplConfig& cfg);
  ~ReplSession();

  ReplSession(const ReplSession&) = delete;
  ReplSession& operator=(const ReplSession&) = delete;

  /// Submits header + statement as one command and classifies the response.
  /// Timeouts kill the child and return a timeout result; a dead session
  /// throws SessionDead.
  VerificationResult verify(const std::string& statement);

  bool dead() const { return dead_; }
  int checks() const { return checks_; }

private:
  void launch();
  void kill_child();
  std::string read_response(double timeout_s);

  ReplConfig cfg_;
  int pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  std::string buffer_;
  bool dead_ = true;
  int checks_ = 0;
};

class Verifier {
public:
  virtual ~Verifier() = default;
  virtual VerificationResult verify(const std::string& statement) = 0;
};

/// Pool of REPL sessions with recycling: a session is replaced after a
/// configurable number of checks or after any crash; a SessionDead during a
/// check is retried once on a fresh session.
class ReplVerifier : public Verifier {
public:
  explicit ReplVerifier(ReplConfig cfg, int pool_size = 1, int max_checks_per_session = 100);
  ~ReplVerifier() override;

  VerificationResult verify(const std::string& statement) override;

private:
  std::unique_ptr<ReplSession> checkout();
  void checkin(std::unique_ptr<ReplSession> session);

  ReplConfig cfg_;
  int pool_size_;
  int max_checks_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<ReplSession>> idle_;
  int outstanding_ = 0;
};

/// Offline verifier driven by canned raw REPL responses, selected by
/// substring match on the statement; classification goes through
/// classify_messages so stubs and live sessions share one code path.
class StubVerifier : public Verifier {
public:
  struct Entry {
    std::vector<std::string> match;  // all substrings must occur
    json response;
    std::int64_t elapsed_ms = 0;
  };

  StubVerifier(std::vector<Entry> entries, std::optional<json> fallback);

  static std::shared_ptr<StubVerifier> from_json(const json& spec);
  static std::shared_ptr<StubVerifier> from_file(const std::string& path);

  VerificationResult verify(const std::string& statement) override;

private:
  std::vector<Entry> entries_;
  std::optional<json> fallback_;
};

}  // namespace autoform
