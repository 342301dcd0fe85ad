#include "autoform/rating.hpp"

#include <iomanip>
#include <sstream>

namespace autoform {
namespace {

constexpr std::array<const char*, 5> kDimensionNames = {
    "relevance", "complexity_depth", "interdisciplinary", "community_needs",
    "innovativeness"};

std::array<Rating, 5> dimension_values(const QualityAssessment& qa) {
  return {qa.relevance, qa.complexity_depth, qa.interdisciplinary, qa.community_needs,
          qa.innovativeness};
}

}  // namespace

json RatedEntry::to_json() const {
  json j = {{"problem_id", problem_id}, {"statement_ordinal", statement_ordinal}};
  if (assessment.has_value()) {
    const QualityAssessment& qa = *assessment;
    auto values = dimension_values(qa);
    json ratings = json::object();
    for (std::size_t i = 0; i < kDimensionNames.size(); ++i) {
      ratings[kDimensionNames[i]] = rating_key(values[i]);
    }
    j["ratings"] = ratings;
    j["overall"] = rating_key(qa.overall);
    j["analysis"] = qa.analysis;
    j["unrated"] = false;
  } else {
    j["unrated"] = true;
  }
  return j;
}

RatedEntry RatedEntry::from_json(const json& j) {
  RatedEntry entry;
  entry.problem_id = j.at("problem_id").get<std::string>();
  entry.statement_ordinal = j.value("statement_ordinal", 1);
  if (j.value("unrated", false)) return entry;

  QualityAssessment qa;
  const json& ratings = j.at("ratings");
  auto read = [&](const char* name) {
    auto r = parse_rating_word(ratings.at(name).get<std::string>());
    if (!r.has_value()) throw Error(std::string("bad rating for ") + name);
    return *r;
  };
  qa.relevance = read("relevance");
  qa.complexity_depth = read("complexity_depth");
  qa.interdisciplinary = read("interdisciplinary");
  qa.community_needs = read("community_needs");
  qa.innovativeness = read("innovativeness");
  auto overall = parse_rating_word(j.at("overall").get<std::string>());
  if (!overall.has_value()) throw Error("bad overall rating");
  qa.overall = *overall;
  qa.analysis = j.value("analysis", "");
  entry.assessment = qa;
  return entry;
}

std::optional<QualityAssessment> rate_statement(const std::string& lean, Gateway& gateway,
                                                const PromptSet& prompts) {
  if (lean.empty()) throw Error("cannot rate an empty statement");
  std::string prompt = build_rating_prompt(lean, prompts);
  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatRequest req = gateway.new_request(Role::rater);
    req.messages.push_back({ChatMessage::Speaker::user, prompt});
    req.seed = attempt;
    try {
      return parse_rating(gateway.complete(req).text);
    } catch (const RatingUnparseable&) {
    }
  }
  return std::nullopt;
}

std::optional<double> RatingDistribution::fraction_at_least(Rating threshold) const {
  if (rated == 0) return std::nullopt;
  std::int64_t at_least = 0;
  for (std::size_t i = static_cast<std::size_t>(threshold); i < overall.size(); ++i) {
    at_least += overall[i];
  }
  return static_cast<double>(at_least) / static_cast<double>(rated);
}

json RatingDistribution::to_json() const {
  auto histogram = [](const std::array<std::int64_t, 5>& counts) {
    json h = json::object();
    for (int r = 0; r < 5; ++r) {
      h[rating_key(static_cast<Rating>(r))] = counts[static_cast<std::size_t>(r)];
    }
    return h;
  };
  json dims = json::object();
  for (const auto& [name, counts] : per_dimension) dims[name] = histogram(counts);
  json j = {{"per_dimension", dims},
            {"overall", histogram(overall)},
            {"rated", rated},
            {"unrated", unrated}};
  auto frac = fraction_at_least(Rating::above_average);
  j["fraction_at_least_above_average"] = frac.has_value() ? json(*frac) : json(nullptr);
  return j;
}

std::string RatingDistribution::render_text() const {
  std::ostringstream out;
  auto line = [&](const std::string& name, const std::array<std::int64_t, 5>& counts) {
    out << name;
    for (std::size_t i = name.size(); i < 20; ++i) out << ' ';
    for (int r = 0; r < 5; ++r) {
      std::string cell = std::to_string(counts[static_cast<std::size_t>(r)]);
      for (std::size_t i = cell.size(); i < 10; ++i) out << ' ';
      out << cell;
    }
    out << "\n";
  };
  out << "dimension                 poor      fair  abv. avg      good excellent\n";
  for (const auto& [name, counts] : per_dimension) line(name, counts);
  line("overall", overall);
  out << "rated: " << rated << "  unrated: " << unrated;
  auto frac = fraction_at_least(Rating::above_average);
  if (frac.has_value()) {
    out << "  at least above average: " << std::fixed << std::setprecision(2)
        << (*frac * 100.0) << "%";
  }
  out << "\n";
  return out.str();
}

RatingDistribution rating_distribution(const std::vector<RatedEntry>& entries) {
  RatingDistribution dist;
  for (const char* name : kDimensionNames) {
    dist.per_dimension[name] = {};
  }
  for (const RatedEntry& entry : entries) {
    if (!entry.assessment.has_value()) {
      ++dist.unrated;
      continue;
    }
    ++dist.rated;
    const QualityAssessment& qa = *entry.assessment;
    auto values = dimension_values(qa);
    for (std::size_t i = 0; i < kDimensionNames.size(); ++i) {
      ++dist.per_dimension[kDimensionNames[i]][static_cast<std::size_t>(values[i])];
    }
    ++dist.overall[static_cast<std::size_t>(qa.overall)];
  }
  return dist;
}

}  // namespace autoform
