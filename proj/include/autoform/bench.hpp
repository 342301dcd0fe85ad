#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autoform/gateway.hpp"
#include "autoform/verify.hpp"

namespace autoform {

struct BenchConfig {
  int sample_size = 1000;
  int attempts_per_problem = 32;
  std::int64_t seed = 0;
};

struct BenchStatement {
  std::string problem_id;
  std::string lean;  // must end in the proof placeholder
};

struct BenchProblemResult {
  std::string problem_id;
  std::string statement;
  bool solved = false;
  int attempts_used = 0;
  std::optional<int> solving_attempt;  // 1-based index of the first success
  std::string proof;                   // verified candidate when solved
  bool flagged = false;                // a prover outage occurred
};

struct ProverBenchResult {
  BenchConfig config;
  std::vector<BenchProblemResult> problems;
  double pass_rate = 0.0;  // solved / sample_size

  json to_json() const;
};

/// Uniform sample without replacement, deterministic given the seed.
/// Raises SampleTooLarge when n exceeds the population.
std::vector<BenchStatement> sample_problems(const std::vector<BenchStatement>& statements,
                                            std::size_t n, std::uint64_t seed);

/// Replaces the statement's proof placeholder with the prover's reply (or
/// extracts a full declaration when the reply contains one).
std::string splice_proof(const std::string& statement, const std::string& prover_reply);

struct AttemptResult {
  bool solved = false;
  std::string proof;
  bool prover_unavailable = false;
};

/// One proof attempt: ask the prover role to complete the statement, then
/// verify the candidate. Solved only on a full pass (no errors, no sorry).
/// A prover outage counts as unsolved and is flagged.
AttemptResult attempt_proof(const std::string& statement, Gateway& prover,
                            Verifier& verifier, std::optional<std::int64_t> seed);

/// Up to attempts_per_problem independent attempts per sampled problem,
/// stopping early on the first success (pass@N semantics).
ProverBenchResult run_benchmark(const std::vector<BenchStatement>& statements,
                                const BenchConfig& cfg, Gateway& prover,
                                Verifier& verifier);

/// Pass rate when each problem's recorded attempt stream is capped at
/// `attempts` tries — the prefix property used by the monotonicity check.
double pass_rate_at(const std::vector<std::vector<bool>>& attempt_streams, int attempts);

}  // namespace autoform
