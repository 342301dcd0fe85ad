#pragma once

#include <optional>
#include <string>
#include <vector>

#include "autoform/errors.hpp"

namespace autoform {

enum class ExemplarTopic { algebra, number_theory };

/// One worked NL/Lean pair included in the translation prompt.
struct FewShotExemplar {
  std::string nl_statement;
  std::string lean_statement;  // must end with the proof placeholder
  ExemplarTopic topic = ExemplarTopic::algebra;
};

enum class FailureStage { verification, consistency };

/// What went wrong with a previous translation attempt, fed back into the
/// retranslation prompt.
struct FailureContext {
  std::string failed_lean;
  FailureStage stage = FailureStage::verification;
  std::string error_text;  // compiler messages or checker analysis
};

struct ConsistencyVerdict {
  bool same = false;
  std::string analysis;
};

/// Five-level ordinal used by all quality ratings.
enum class Rating { poor = 0, fair = 1, above_average = 2, good = 3, excellent = 4 };

std::string rating_label(Rating r);  // "above average"
std::string rating_key(Rating r);    // "above_average"
std::optional<Rating> parse_rating_word(const std::string& word);

struct QualityAssessment {
  Rating relevance = Rating::poor;
  Rating complexity_depth = Rating::poor;
  Rating interdisciplinary = Rating::poor;
  Rating community_needs = Rating::poor;
  Rating innovativeness = Rating::poor;
  Rating overall = Rating::poor;
  std::string analysis;
};

/// The prompt templates. The builtin set is the default; a set loaded from
/// a directory of text files can override it per run.
struct PromptSet {
  std::string translation;            // {few_shot}, {problem}
  std::string translation_zero_shot;  // {problem}
  std::string feedback;               // {problem}, {failed_info}
  std::string backtranslation;        // {prompt}
  std::string consistency;            // {origin}, {back}
  std::string rating;                 // {prompt}

  static PromptSet builtin();
  static PromptSet from_dir(const std::string& dir);
};

const PromptSet& builtin_prompts();
const std::vector<FewShotExemplar>& default_exemplars();

/// Renders the {few_shot} block from exemplar pairs.
std::string render_few_shot_block(const std::vector<FewShotExemplar>& exemplars);

std::string build_translation_prompt(const std::string& problem_statement,
                                     const std::vector<FewShotExemplar>& exemplars,
                                     bool few_shot,
                                     const PromptSet& prompts = builtin_prompts());

std::string build_feedback_prompt(const std::string& problem_statement,
                                  const FailureContext& fail,
                                  const PromptSet& prompts = builtin_prompts());

std::string build_backtranslation_prompt(const std::string& lean,
                                         const PromptSet& prompts = builtin_prompts());

std::string build_consistency_prompt(const std::string& origin, const std::string& back,
                                     const PromptSet& prompts = builtin_prompts());

std::string build_rating_prompt(const std::string& lean,
                                const PromptSet& prompts = builtin_prompts());

/// Pulls the Lean statement out of a model completion: first fenced code
/// block if present, otherwise the whole text; leading import lines are
/// stripped (the verifier re-adds the header); a missing proof term is
/// completed with ":= by sorry". Throws NoTheoremFound when no declaration
/// keyword appears anywhere.
std::string extract_lean_code(const std::string& completion);

/// Locates the first JSON object containing a boolean "Same" key, tolerating
/// surrounding prose and quote fences. Throws VerdictUnparseable.
ConsistencyVerdict parse_consistency_verdict(const std::string& completion);

/// Renders a verdict in the constrained checker output format.
std::string render_consistency_verdict(const ConsistencyVerdict& v);

/// Parses the rating response: the object holding "Analysis" (per-dimension
/// ratings) and "Assessment" (overall). Throws RatingUnparseable when any of
/// the five dimensions or the overall rating is missing or unrecognized.
QualityAssessment parse_rating(const std::string& completion);

/// Renders an assessment in the constrained rating response format,
/// attaching `reason` to every dimension.
std::string render_rating(const QualityAssessment& qa, const std::string& reason);

/// Single-pass placeholder substitution; substituted values are inserted
/// verbatim and never rescanned.
std::string substitute_placeholders(
    const std::string& tmpl,
    const std::vector<std::pair<std::string, std::string>>& values);

}  // namespace autoform
