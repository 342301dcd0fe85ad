#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autoform/gateway.hpp"

namespace autoform {

enum class Category { algebra, number_theory, combinatorics, geometry, other, unknown };

std::string category_name(Category c);
std::optional<Category> category_from_name(const std::string& name);

struct RawDocument {
  std::string source_id;  // competition + year
  std::string body;       // markdown text
};

struct Problem {
  std::string id;
  std::string source_id;
  std::string statement;  // may contain LaTeX, treated as opaque text
  Category category = Category::unknown;
  std::optional<std::string> parent_id;   // set iff produced by splitting
  std::optional<int> subgoal_index;       // 1..n within one parent

  json to_json() const;
  static Problem from_json(const json& j);
};

struct PreprocessReport {
  std::int64_t total_in = 0;
  std::int64_t geometry_dropped = 0;
  std::int64_t split_parents = 0;
  std::int64_t total_out = 0;
};

/// Splits a document into problems at header matches (document order).
/// Each statement is the text between consecutive headers, trimmed; the
/// category starts as unknown. A malformed pattern raises PatternInvalid;
/// a body with no matches yields an empty list.
std::vector<Problem> extract_problems(const RawDocument& doc,
                                      const std::string& numbering_pattern);

/// Default header pattern: line-anchored "Problem <int>" with optional dot.
extern const char* kDefaultNumberingPattern;

struct JudgeDecision {
  Category category = Category::unknown;
  bool drop = false;           // true iff category is geometry
  bool review_flagged = false; // verdict unparseable after one retry
};

/// Asks the judge role for a constrained single-line category verdict;
/// one retry on parse failure, then a conservative keep with unknown
/// category, flagged for review.
JudgeDecision classify_problem(const Problem& p, Gateway& judge);

/// Asks the judge role whether the problem bundles several subgoals; a
/// multi-goal problem is split into children of the form shared conditions
/// plus one subgoal, indexed 1..n. Single-goal problems (and unparseable
/// verdicts, after one retry) come back unchanged.
std::vector<Problem> split_subproblems(const Problem& p, Gateway& judge,
                                       bool* review_flagged = nullptr);

struct PreprocessResult {
  std::vector<Problem> kept;
  std::vector<Problem> dropped;  // geometry problems, retained for audit
  std::vector<std::string> review_flagged;
  PreprocessReport report;
};

/// Geometry filtering first, then subgoal splitting of the kept problems.
PreprocessResult preprocess_corpus(const std::vector<Problem>& problems, Gateway& judge);

std::vector<Problem> problems_from_jsonl(const std::string& text);
std::string problems_to_jsonl(const std::vector<Problem>& problems);

}  // namespace autoform
