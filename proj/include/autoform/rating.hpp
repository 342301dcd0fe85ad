#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autoform/gateway.hpp"
#include "autoform/prompts.hpp"

namespace autoform {

struct RatedEntry {
  std::string problem_id;
  int statement_ordinal = 1;
  std::optional<QualityAssessment> assessment;  // nullopt = unrated

  json to_json() const;
  static RatedEntry from_json(const json& j);
};

/// Builds the rating prompt, asks the rater role, parses the verdict; one
/// retry on parse failure, then unrated.
std::optional<QualityAssessment> rate_statement(const std::string& lean, Gateway& gateway,
                                                const PromptSet& prompts = builtin_prompts());

struct RatingDistribution {
  // dimension name -> counts indexed by Rating ordinal
  std::map<std::string, std::array<std::int64_t, 5>> per_dimension;
  std::array<std::int64_t, 5> overall{};
  std::int64_t rated = 0;
  std::int64_t unrated = 0;

  /// Fraction of rated entries whose overall rating is at least the
  /// threshold; absent when nothing was rated.
  std::optional<double> fraction_at_least(Rating threshold) const;

  json to_json() const;
  std::string render_text() const;
};

RatingDistribution rating_distribution(const std::vector<RatedEntry>& entries);

}  // namespace autoform
