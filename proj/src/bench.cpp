#include "autoform/bench.hpp"

#include <algorithm>
#include <atomic>
#include <random>
#include <thread>

#include "autoform/prompts.hpp"

namespace autoform {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

constexpr const char* kPlaceholder = ":= by sorry";

}  // namespace

json ProverBenchResult::to_json() const {
  json problems_json = json::array();
  for (const auto& p : problems) {
    json item = {{"problem_id", p.problem_id},
                 {"statement", p.statement},
                 {"solved", p.solved},
                 {"attempts_used", p.attempts_used},
                 {"flagged", p.flagged}};
    item["solving_attempt"] = p.solving_attempt.has_value() ? json(*p.solving_attempt)
                                                            : json(nullptr);
    if (p.solved) item["proof"] = p.proof;
    problems_json.push_back(std::move(item));
  }
  return {{"config",
           {{"sample_size", config.sample_size},
            {"attempts_per_problem", config.attempts_per_problem},
            {"seed", config.seed}}},
          {"problems", problems_json},
          {"pass_rate", pass_rate}};
}

std::vector<BenchStatement> sample_problems(const std::vector<BenchStatement>& statements,
                                            std::size_t n, std::uint64_t seed) {
  if (n > statements.size()) {
    throw SampleTooLarge("sample size " + std::to_string(n) + " exceeds population " +
                         std::to_string(statements.size()));
  }
  std::vector<std::size_t> indices(statements.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  std::mt19937_64 rng(seed);
  // Fisher-Yates; the first n positions are a uniform sample without replacement
  for (std::size_t i = 0; i + 1 < indices.size() && i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, indices.size() - 1);
    std::swap(indices[i], indices[pick(rng)]);
  }
  std::vector<BenchStatement> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(statements[indices[i]]);
  return out;
}

std::string splice_proof(const std::string& statement, const std::string& prover_reply) {
  std::string reply = trim(prover_reply);
  if (reply.find("```") != std::string::npos || reply.find("theorem") != std::string::npos ||
      reply.find("lemma") != std::string::npos || reply.find("example") != std::string::npos) {
    try {
      return extract_lean_code(reply);
    } catch (const NoTheoremFound&) {
      // fall through to placeholder splicing
    }
  }
  std::size_t pos = statement.rfind(kPlaceholder);
  if (pos == std::string::npos) {
    throw Error("statement does not end in the proof placeholder");
  }
  std::string head = statement.substr(0, pos);
  if (reply.rfind(":=", 0) == 0) return head + reply;
  if (reply.rfind("by", 0) == 0) return head + ":= " + reply;
  return head + ":= " + reply;
}

AttemptResult attempt_proof(const std::string& statement, Gateway& prover,
                            Verifier& verifier, std::optional<std::int64_t> seed) {
  AttemptResult result;
  std::string reply;
  try {
    ChatRequest req = prover.new_request(Role::prover);
    req.messages.push_back({ChatMessage::Speaker::user, statement});
    req.seed = seed;
    reply = prover.complete(req).text;
  } catch (const Error&) {
    result.prover_unavailable = true;
    return result;
  }

  std::string candidate;
  try {
    candidate = splice_proof(statement, reply);
  } catch (const Error&) {
    return result;  // unusable reply counts as an unsolved attempt
  }
  VerificationResult verification = verifier.verify(candidate);
  if (verification.status == VerifyStatus::pass) {
    result.solved = true;
    result.proof = candidate;
  }
  return result;
}

ProverBenchResult run_benchmark(const std::vector<BenchStatement>& statements,
                                const BenchConfig& cfg, Gateway& prover,
                                Verifier& verifier) {
  if (cfg.sample_size < 1 || cfg.attempts_per_problem < 1) {
    throw Error("benchmark needs a positive sample size and attempt count");
  }
  std::vector<BenchStatement> sample =
      sample_problems(statements, static_cast<std::size_t>(cfg.sample_size),
                      static_cast<std::uint64_t>(cfg.seed));

  ProverBenchResult result;
  result.config = cfg;
  result.problems.resize(sample.size());

  auto run_one = [&](std::size_t i) {
    const BenchStatement& stmt = sample[i];
    BenchProblemResult pr;
    pr.problem_id = stmt.problem_id;
    pr.statement = stmt.lean;
    for (int attempt = 1; attempt <= cfg.attempts_per_problem; ++attempt) {
      pr.attempts_used = attempt;
      AttemptResult ar;
      try {
        ar = attempt_proof(stmt.lean, prover, verifier, attempt);
      } catch (const Error&) {
        pr.flagged = true;
        continue;  // infrastructure trouble counts as an unsolved attempt
      }
      if (ar.prover_unavailable) pr.flagged = true;
      if (ar.solved) {
        pr.solved = true;
        pr.solving_attempt = attempt;
        pr.proof = ar.proof;
        break;  // pass@N: first success ends the problem
      }
    }
    result.problems[i] = std::move(pr);
  };

  // problems run concurrently; attempts for one problem stay sequential so
  // early stopping is well-defined
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= sample.size()) return;
      run_one(i);
    }
  };
  unsigned pool = std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                                     static_cast<unsigned>(sample.size()));
  std::vector<std::thread> threads;
  threads.reserve(pool);
  for (unsigned i = 0; i < pool; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  std::int64_t solved = std::count_if(result.problems.begin(), result.problems.end(),
                                      [](const auto& p) { return p.solved; });
  result.pass_rate = sample.empty()
                         ? 0.0
                         : static_cast<double>(solved) / static_cast<double>(sample.size());
  return result;
}

double pass_rate_at(const std::vector<std::vector<bool>>& attempt_streams, int attempts) {
  if (attempt_streams.empty()) return 0.0;
  std::size_t solved = 0;
  for (const auto& stream : attempt_streams) {
    std::size_t cap = std::min<std::size_t>(stream.size(),
                                            static_cast<std::size_t>(std::max(0, attempts)));
    for (std::size_t i = 0; i < cap; ++i) {
      if (stream[i]) {
        ++solved;
        break;
      }
    }
  }
  return static_cast<double>(solved) / static_cast<double>(attempt_streams.size());
}

}  // namespace autoform
