#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include <json.hpp>

#include "autoform/corpus.hpp"
#include "autoform/gateway.hpp"
#include "autoform/prompts.hpp"
#include "autoform/verify.hpp"

namespace autoform {

struct RunConfig {
  int samples_per_problem = 5;
  int feedback_rounds = 1;
  bool few_shot = true;
  double translator_temperature = 1.0;
  bool dedup_normalized = true;
  // acceptance rule is fixed: a sample is accepted when it passes both
  // verification and the consistency check
  int concurrency = 1;
  std::int64_t seed = 0;

  /// Semantic fields only; execution knobs (concurrency) do not affect
  /// outcomes and stay out of the hash.
  json semantic_json() const;
  std::string config_hash() const;
  static RunConfig from_json(const json& j);
};

enum class AttemptOutcome { fv_fail, cc_fail, accepted };

std::string attempt_outcome_name(AttemptOutcome o);
std::optional<AttemptOutcome> attempt_outcome_from_name(const std::string& name);

struct AttemptRecord {
  std::string problem_id;
  int sample_index = 1;  // 1..K
  int round = 0;         // 0 initial, >=1 feedback
  std::string lean;
  VerificationResult verification;
  std::optional<std::string> backtranslation;
  std::optional<ConsistencyVerdict> verdict;
  AttemptOutcome outcome = AttemptOutcome::fv_fail;
  std::int64_t ts_ms = 0;

  json to_json() const;
  static AttemptRecord from_json(const json& j);
};

struct IncompleteEvent {
  std::string problem_id;
  std::string error;
  std::int64_t ts_ms = 0;
};

struct RunHeader {
  json config;
  std::string config_hash;
  std::string corpus_hash;
  std::int64_t created_at_ms = 0;
  std::string version = "0.1.0";
};

using RunEvent = std::variant<AttemptRecord, IncompleteEvent>;

/// Append-only event log: one header line, then one JSON object per event.
/// Replaying the log reconstructs every problem outcome exactly.
struct RunLog {
  RunHeader header;
  std::vector<RunEvent> events;

  std::string serialize() const;
  /// Serialization with timestamp fields removed, for run-to-run comparison.
  std::string serialize_without_timestamps() const;

  static RunLog parse(const std::string& text);
  static RunLog read_file(const std::string& path);

  std::vector<const AttemptRecord*> attempts() const;
  std::vector<const IncompleteEvent*> incompletes() const;
};

enum class ProblemStatus { accepted, failed, incomplete };

struct StatementProvenance {
  int round = 0;
  int sample_index = 1;
};

struct ProblemOutcome {
  std::string problem_id;
  ProblemStatus status = ProblemStatus::failed;
  std::vector<std::string> accepted_statements;  // renamed, deduplicated
  std::vector<StatementProvenance> provenance;   // one entry per statement
  bool first_pass = false;                       // accepted without feedback
  std::vector<AttemptRecord> attempts;
  std::string error;  // incomplete reason
};

/// Completed (problem, round, sample) attempts from an earlier log; keys the
/// work resume can skip.
using ResumeCache = std::map<std::tuple<std::string, int, int>, AttemptRecord>;

ResumeCache build_resume_cache(const RunLog& log);

struct PipelineServices {
  Gateway& gateway;
  Verifier& verifier;
  const PromptSet& prompts;
  const std::vector<FewShotExemplar>& exemplars;
};

/// Figure-of-merit orchestration for one problem: K translation samples,
/// verification, backtranslation and consistency check per sample, then up
/// to the configured number of error-feedback rounds when nothing was
/// accepted. Model-quality failures are recorded outcomes; infrastructure
/// failures mark the problem incomplete (resumable) instead of throwing.
ProblemOutcome formalize_problem(const Problem& p, const RunConfig& cfg,
                                 PipelineServices& services,
                                 const ResumeCache* cache = nullptr);

/// Digest of the canonical problem serialization, stored in the run header.
std::string corpus_hash(const std::vector<Problem>& problems);

/// Runs the whole corpus with a bounded worker pool. Events are flushed to
/// log_path (when non-empty) after each problem, in corpus order, so two
/// runs with the same script produce identical logs modulo timestamps.
RunLog run_corpus(const std::vector<Problem>& problems, const RunConfig& cfg,
                  PipelineServices& services, const std::string& log_path = "",
                  const ResumeCache* cache = nullptr);

/// Re-runs a corpus against an existing log: completed attempts are replayed
/// instead of re-executed, and the rewritten log equals an uninterrupted
/// run's. Raises ConfigMismatch when the log header disagrees with the
/// current config or corpus.
RunLog resume_run(const RunLog& prior, const std::vector<Problem>& problems,
                  const RunConfig& cfg, PipelineServices& services,
                  const std::string& log_path = "");

/// Replaces the declaration name with one derived from (problem_id, ordinal);
/// every other byte is unchanged. Anonymous `example` declarations become
/// named theorems. Throws NoTheoremFound.
std::string canonical_rename(const std::string& lean, const std::string& problem_id,
                             int ordinal);

/// Key used for duplicate detection: declaration name canonicalized away,
/// whitespace runs collapsed.
std::string normalize_statement(const std::string& lean);

/// Derives a problem's outcome from its attempt records — the same path
/// formalize_problem uses, so log replay reconstructs outcomes exactly.
ProblemOutcome derive_outcome(const std::string& problem_id,
                              std::vector<AttemptRecord> attempts,
                              const RunConfig& cfg);

std::vector<ProblemOutcome> replay_outcomes(const RunLog& log);

/// Dataset lines for accepted problems:
/// {problem_id, natural_language, formal_statements, provenance}.
std::string dataset_jsonl(const std::vector<Problem>& problems,
                          const std::vector<ProblemOutcome>& outcomes);

}  // namespace autoform
