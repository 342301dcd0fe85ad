#include "autoform/verify.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "autoform/clock.hpp"
#include "autoform/jsonl.hpp"

namespace autoform {
namespace {

constexpr const char* kSorryMarker = "declaration uses 'sorry'";

Severity severity_from_name(const std::string& name) {
  if (name == "error") return Severity::error;
  if (name == "warning") return Severity::warning;
  return Severity::info;
}

// shell-like tokenization: whitespace-separated, single/double quotes grouped
std::vector<std::string> tokenize_command(const std::string& command) {
  std::vector<std::string> tokens;
  std::string current;
  char quote = '\0';
  bool in_token = false;
  for (char c : command) {
    if (quote != '\0') {
      if (c == quote) {
        quote = '\0';
      } else {
        current.push_back(c);
      }
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
      in_token = true;
      continue;
    }
    if (c == ' ' || c == '\t') {
      if (in_token) {
        tokens.push_back(current);
        current.clear();
        in_token = false;
      }
      continue;
    }
    current.push_back(c);
    in_token = true;
  }
  if (in_token) tokens.push_back(current);
  return tokens;
}

}  // namespace

std::string verify_status_name(VerifyStatus s) {
  switch (s) {
    case VerifyStatus::pass: return "pass";
    case VerifyStatus::pass_with_sorry: return "pass_with_sorry";
    case VerifyStatus::error: return "error";
    case VerifyStatus::timeout: return "timeout";
    case VerifyStatus::crash: return "crash";
  }
  return "crash";
}

std::optional<VerifyStatus> verify_status_from_name(const std::string& name) {
  if (name == "pass") return VerifyStatus::pass;
  if (name == "pass_with_sorry") return VerifyStatus::pass_with_sorry;
  if (name == "error") return VerifyStatus::error;
  if (name == "timeout") return VerifyStatus::timeout;
  if (name == "crash") return VerifyStatus::crash;
  return std::nullopt;
}

std::string severity_name(Severity s) {
  switch (s) {
    case Severity::error: return "error";
    case Severity::warning: return "warning";
    case Severity::info: return "info";
  }
  return "info";
}

json VerificationResult::to_json() const {
  json messages_json = json::array();
  for (const auto& m : messages) {
    messages_json.push_back({{"severity", severity_name(m.severity)},
                             {"line", m.line},
                             {"column", m.column},
                             {"text", m.text}});
  }
  json out = {{"status", verify_status_name(status)},
              {"messages", messages_json},
              {"elapsed_ms", elapsed_ms}};
  if (!raw.empty()) out["raw"] = raw;
  return out;
}

VerificationResult VerificationResult::from_json(const json& j) {
  VerificationResult r;
  r.status = verify_status_from_name(j.value("status", "crash")).value_or(VerifyStatus::crash);
  r.elapsed_ms = j.value("elapsed_ms", std::int64_t{0});
  r.raw = j.value("raw", "");
  if (j.contains("messages") && j["messages"].is_array()) {
    for (const auto& m : j["messages"]) {
      ReplMessage msg;
      msg.severity = severity_from_name(m.value("severity", "info"));
      msg.line = m.value("line", 0);
      msg.column = m.value("column", 0);
      msg.text = m.value("text", "");
      r.messages.push_back(std::move(msg));
    }
  }
  return r;
}

std::string encode_repl_request(const std::string& source) {
  return json{{"cmd", source}}.dump() + "\n\n";
}

VerificationResult classify_messages(const json& raw_response) {
  VerificationResult result;
  if (!raw_response.is_object()) {
    result.status = VerifyStatus::crash;
    result.raw = raw_response.dump();
    return result;
  }

  bool has_error = false;
  bool has_sorry = false;

  if (raw_response.contains("sorries") && raw_response["sorries"].is_array() &&
      !raw_response["sorries"].empty()) {
    has_sorry = true;
  }

  if (raw_response.contains("messages") && raw_response["messages"].is_array()) {
    for (const auto& m : raw_response["messages"]) {
      if (!m.is_object()) continue;
      ReplMessage msg;
      msg.severity = severity_from_name(m.value("severity", "info"));
      if (m.contains("pos") && m["pos"].is_object()) {
        msg.line = m["pos"].value("line", 0);
        msg.column = m["pos"].value("column", 0);
      }
      msg.text = m.value("data", "");
      if (msg.severity == Severity::error) has_error = true;
      if (msg.severity == Severity::warning &&
          msg.text.find(kSorryMarker) != std::string::npos) {
        has_sorry = true;
      }
      result.messages.push_back(std::move(msg));
    }
  }

  if (has_error) {
    result.status = VerifyStatus::error;
  } else if (has_sorry) {
    result.status = VerifyStatus::pass_with_sorry;
  } else {
    result.status = VerifyStatus::pass;
  }
  return result;
}

VerificationResult classify_response_text(const std::string& raw) {
  json parsed = json::parse(raw, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) {
    VerificationResult result;
    result.status = VerifyStatus::crash;
    result.raw = raw;
    return result;
  }
  return classify_messages(parsed);
}

std::string summarize_errors(const VerificationResult& r) {
  if (r.status == VerifyStatus::timeout) {
    auto seconds = static_cast<std::int64_t>(std::llround(r.elapsed_ms / 1000.0));
    return "verification timed out after " + std::to_string(seconds) + "s";
  }
  if (r.status == VerifyStatus::crash) {
    std::string out = "verifier crashed";
    if (!r.raw.empty()) {
      out += ": " + r.raw.substr(0, std::min<std::size_t>(200, r.raw.size()));
    }
    return out;
  }
  std::string out;
  for (const auto& m : r.messages) {
    if (m.severity != Severity::error) continue;
    if (!out.empty()) out += "\n";
    out += "line " + std::to_string(m.line) + ", col " + std::to_string(m.column) + ": " +
           m.text;
  }
  return out;
}

// ---------------------------------------------------------------------------
// ReplSession

ReplSession::ReplSession(const ReplConfig& cfg) : cfg_(cfg) {
  launch();
}

ReplSession::~ReplSession() {
  kill_child();
}

void ReplSession::launch() {
  std::vector<std::string> tokens = tokenize_command(cfg_.launch_command);
  if (tokens.empty()) throw LaunchFailed("empty launch command");

  int in_pipe[2];   // parent -> child stdin
  int out_pipe[2];  // child stdout -> parent
  int exec_pipe[2]; // exec-failure signal, close-on-exec
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0 || pipe(exec_pipe) != 0) {
    throw LaunchFailed("pipe() failed");
  }
  fcntl(exec_pipe[1], F_SETFD, FD_CLOEXEC);

  pid_t pid = fork();
  if (pid < 0) throw LaunchFailed("fork() failed");

  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    close(exec_pipe[0]);
    if (!cfg_.working_dir.empty() && chdir(cfg_.working_dir.c_str()) != 0) {
      int err = errno;
      ssize_t n = write(exec_pipe[1], &err, sizeof(err));
      (void)n;
      _exit(127);
    }
    std::vector<char*> argv;
    argv.reserve(tokens.size() + 1);
    for (auto& t : tokens) argv.push_back(t.data());
    argv.push_back(nullptr);
    execvp(argv[0], argv.data());
    int err = errno;
    ssize_t n = write(exec_pipe[1], &err, sizeof(err));
    (void)n;
    _exit(127);
  }

  close(in_pipe[0]);
  close(out_pipe[1]);
  close(exec_pipe[1]);
  stdin_fd_ = in_pipe[1];
  stdout_fd_ = out_pipe[0];
  pid_ = pid;

  int exec_errno = 0;
  ssize_t n = read(exec_pipe[0], &exec_errno, sizeof(exec_errno));
  close(exec_pipe[0]);
  if (n > 0) {
    kill_child();
    throw LaunchFailed("cannot launch \"" + tokens[0] + "\": " +
                       std::strerror(exec_errno));
  }

  dead_ = false;

  // handshake: the header import must elaborate within the startup budget
  std::string handshake = encode_repl_request(cfg_.header);
  if (write(stdin_fd_, handshake.data(), handshake.size()) < 0) {
    kill_child();
    throw LaunchFailed("REPL closed stdin during startup");
  }
  std::string response;
  try {
    response = read_response(cfg_.startup_timeout_s);
  } catch (const SessionDead&) {
    kill_child();
    throw LaunchFailed("REPL exited during startup");
  } catch (const TimeoutError&) {
    kill_child();
    throw StartupTimeout("no handshake response within " +
                         std::to_string(cfg_.startup_timeout_s) + "s");
  }
  VerificationResult check = classify_response_text(response);
  if (check.status == VerifyStatus::crash) {
    kill_child();
    throw LaunchFailed("undecodable handshake response: " + response.substr(0, 200));
  }
}

void ReplSession::kill_child() {
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
  if (stdin_fd_ >= 0) {
    close(stdin_fd_);
    stdin_fd_ = -1;
  }
  if (stdout_fd_ >= 0) {
    close(stdout_fd_);
    stdout_fd_ = -1;
  }
  dead_ = true;
}

// Reads one response: lines accumulated until a blank line follows content.
// Throws TimeoutError on deadline, SessionDead on EOF.
std::string ReplSession::read_response(double timeout_s) {
  std::int64_t deadline = system_clock().now_ms() + static_cast<std::int64_t>(timeout_s * 1000.0);
  std::string response;
  for (;;) {
    // consume complete lines already buffered
    std::size_t nl;
    while ((nl = buffer_.find('\n')) != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) {
        if (!response.empty()) return response;
        continue;  // leading blank lines are ignored
      }
      if (!response.empty()) response += "\n";
      response += line;
    }

    std::int64_t remaining = deadline - system_clock().now_ms();
    if (remaining <= 0) throw TimeoutError("REPL response deadline exceeded");

    struct pollfd pfd{};
    pfd.fd = stdout_fd_;
    pfd.events = POLLIN;
    int rc = poll(&pfd, 1, static_cast<int>(std::min<std::int64_t>(remaining, 200)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw SessionDead("poll() failed on REPL stdout");
    }
    if (rc == 0) continue;

    char chunk[4096];
    ssize_t n = read(stdout_fd_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw SessionDead("read() failed on REPL stdout");
    }
    if (n == 0) {
      // EOF: a complete trailing response without terminator still counts
      if (!response.empty()) return response;
      throw SessionDead("REPL process closed stdout");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

VerificationResult ReplSession::verify(const std::string& statement) {
  if (dead_) throw SessionDead("session is not live");

  std::string source = cfg_.header.empty() ? statement : cfg_.header + "\n" + statement;
  std::string request = encode_repl_request(source);
  std::int64_t t0 = system_clock().now_ms();

  ssize_t written = write(stdin_fd_, request.data(), request.size());
  if (written < 0 || static_cast<std::size_t>(written) != request.size()) {
    kill_child();
    throw SessionDead("REPL stdin closed");
  }

  std::string response;
  try {
    response = read_response(cfg_.check_timeout_s);
  } catch (const TimeoutError&) {
    kill_child();
    VerificationResult result;
    result.status = VerifyStatus::timeout;
    result.elapsed_ms = static_cast<std::int64_t>(cfg_.check_timeout_s * 1000.0);
    ++checks_;
    return result;
  } catch (const SessionDead&) {
    kill_child();
    throw;
  }

  ++checks_;
  VerificationResult result = classify_response_text(response);
  result.elapsed_ms = std::max<std::int64_t>(0, system_clock().now_ms() - t0);
  if (result.status == VerifyStatus::crash) {
    // protocol state is unknown after undecodable output
    kill_child();
  }
  return result;
}

// ---------------------------------------------------------------------------
// ReplVerifier

ReplVerifier::ReplVerifier(ReplConfig cfg, int pool_size, int max_checks_per_session)
    : cfg_(std::move(cfg)), pool_size_(std::max(1, pool_size)),
      max_checks_(std::max(1, max_checks_per_session)) {}

ReplVerifier::~ReplVerifier() = default;

std::unique_ptr<ReplSession> ReplVerifier::checkout() {
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait(lock, [&] {
    return !idle_.empty() || outstanding_ < pool_size_;
  });
  if (!idle_.empty()) {
    auto session = std::move(idle_.back());
    idle_.pop_back();
    ++outstanding_;
    return session;
  }
  ++outstanding_;
  lock.unlock();
  try {
    return std::make_unique<ReplSession>(cfg_);
  } catch (...) {
    std::lock_guard<std::mutex> relock(mu_);
    --outstanding_;
    cv_.notify_one();
    throw;
  }
}

void ReplVerifier::checkin(std::unique_ptr<ReplSession> session) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    --outstanding_;
    if (session && !session->dead() && session->checks() < max_checks_) {
      idle_.push_back(std::move(session));
    }
  }
  cv_.notify_one();
}

VerificationResult ReplVerifier::verify(const std::string& statement) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto session = checkout();
    try {
      VerificationResult result = session->verify(statement);
      checkin(std::move(session));
      return result;
    } catch (const SessionDead&) {
      checkin(nullptr);
      if (attempt == 1) throw;
    } catch (...) {
      checkin(nullptr);
      throw;
    }
  }
  throw SessionDead("unreachable");
}

// ---------------------------------------------------------------------------
// StubVerifier

StubVerifier::StubVerifier(std::vector<Entry> entries, std::optional<json> fallback)
    : entries_(std::move(entries)), fallback_(std::move(fallback)) {}

std::shared_ptr<StubVerifier> StubVerifier::from_json(const json& spec) {
  const json* list = &spec;
  std::optional<json> fallback;
  if (spec.is_object()) {
    if (spec.contains("default")) fallback = spec["default"];
    if (spec.contains("entries")) list = &spec["entries"];
  }
  if (!list->is_array()) throw Error("stub verifier spec must be an array of entries");
  std::vector<Entry> entries;
  for (const auto& item : *list) {
    Entry e;
    const json& match = item.at("match");
    if (match.is_string()) {
      e.match.push_back(match.get<std::string>());
    } else if (match.is_array()) {
      for (const auto& m : match) e.match.push_back(m.get<std::string>());
    } else {
      throw Error("stub entry match must be a string or array of strings");
    }
    e.response = item.at("response");
    e.elapsed_ms = item.value("elapsed_ms", std::int64_t{0});
    entries.push_back(std::move(e));
  }
  return std::make_shared<StubVerifier>(std::move(entries), std::move(fallback));
}

std::shared_ptr<StubVerifier> StubVerifier::from_file(const std::string& path) {
  json spec = json::parse(read_file(path), nullptr, false);
  if (spec.is_discarded()) throw Error("invalid JSON in stub verifier file: " + path);
  return from_json(spec);
}

VerificationResult StubVerifier::verify(const std::string& statement) {
  for (const auto& e : entries_) {
    bool all = std::all_of(e.match.begin(), e.match.end(), [&](const std::string& m) {
      return statement.find(m) != std::string::npos;
    });
    if (!all) continue;
    VerificationResult result = classify_messages(e.response);
    result.elapsed_ms = e.elapsed_ms;
    return result;
  }
  if (fallback_.has_value()) {
    return classify_messages(*fallback_);
  }
  throw Error("stub verifier has no entry for statement: " +
              statement.substr(0, std::min<std::size_t>(120, statement.size())));
}

}  // namespace autoform
