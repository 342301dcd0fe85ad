#include <doctest.h>

#include "autoform/rating.hpp"

using namespace autoform;

namespace {

std::string canned_rating(const std::string& overall) {
  QualityAssessment qa;
  qa.relevance = Rating::good;
  qa.complexity_depth = Rating::excellent;
  qa.interdisciplinary = Rating::fair;
  qa.community_needs = Rating::good;
  qa.innovativeness = Rating::fair;
  qa.overall = parse_rating_word(overall).value();
  return render_rating(qa, "competition-level statement");
}

RatedEntry rated(const std::string& id, Rating overall) {
  RatedEntry entry;
  entry.problem_id = id;
  QualityAssessment qa;
  qa.relevance = overall;
  qa.complexity_depth = overall;
  qa.interdisciplinary = overall;
  qa.community_needs = overall;
  qa.innovativeness = overall;
  qa.overall = overall;
  qa.analysis = "a";
  entry.assessment = qa;
  return entry;
}

RatedEntry unrated(const std::string& id) {
  RatedEntry entry;
  entry.problem_id = id;
  return entry;
}

}  // namespace

TEST_SUITE("rating") {

TEST_CASE("scripted rater populates the assessment") {
  auto backend = ScriptedBackend::from_json(json::array(
      {{{"match", "interest to the community"}, {"response", canned_rating("good")}}}));
  Gateway gateway(GatewayConfig::offline_defaults(), backend);
  auto qa = rate_statement("theorem test : 1 = 1 := by sorry", gateway);
  REQUIRE(qa.has_value());
  CHECK(qa->overall == Rating::good);
  CHECK(qa->complexity_depth == Rating::excellent);
  CHECK(backend->call_count() == 1);
}

TEST_CASE("malformed rating twice leaves the statement unrated") {
  auto backend = ScriptedBackend::from_json(json::array(
      {{{"match", "interest to the community"},
        {"response", "It deserves a good score overall, I believe."}}}));
  Gateway gateway(GatewayConfig::offline_defaults(), backend);
  auto qa = rate_statement("theorem test : 1 = 1 := by sorry", gateway);
  CHECK_FALSE(qa.has_value());
  CHECK(backend->call_count() == 2);  // one retry
}

TEST_CASE("retry can succeed on the second attempt") {
  auto backend = ScriptedBackend::from_json(json::parse(R"([
    {"match": "interest to the community", "seed": 0, "response": "not json"},
    {"match": "interest to the community", "seed": 1, "response": )" +
                                                      json(canned_rating("fair")).dump() +
                                                      "}]"));
  Gateway gateway(GatewayConfig::offline_defaults(), backend);
  auto qa = rate_statement("theorem test : 1 = 1 := by sorry", gateway);
  REQUIRE(qa.has_value());
  CHECK(qa->overall == Rating::fair);
  CHECK(backend->call_count() == 2);
}

TEST_CASE("above average normalizes through the scripted rater") {
  auto backend = ScriptedBackend::from_json(json::array(
      {{{"match", "interest"}, {"response", canned_rating("above average")}}}));
  Gateway gateway(GatewayConfig::offline_defaults(), backend);
  auto qa = rate_statement("theorem test : 2 = 2 := by sorry", gateway);
  REQUIRE(qa.has_value());
  CHECK(qa->overall == Rating::above_average);
}

TEST_CASE("distribution: hand-counted fractions") {
  std::vector<RatedEntry> entries = {rated("a", Rating::good), rated("b", Rating::good),
                                     rated("c", Rating::fair), rated("d", Rating::fair)};
  RatingDistribution dist = rating_distribution(entries);
  CHECK(dist.rated == 4);
  auto frac = dist.fraction_at_least(Rating::above_average);
  REQUIRE(frac.has_value());
  CHECK(*frac == doctest::Approx(0.5));
}

TEST_CASE("fraction_at_least is nonincreasing in the threshold") {
  std::vector<RatedEntry> entries = {
      rated("a", Rating::poor),      rated("b", Rating::fair),
      rated("c", Rating::above_average), rated("d", Rating::good),
      rated("e", Rating::excellent), rated("f", Rating::good)};
  RatingDistribution dist = rating_distribution(entries);
  double prev = 2.0;
  for (int r = 0; r < 5; ++r) {
    auto frac = dist.fraction_at_least(static_cast<Rating>(r));
    REQUIRE(frac.has_value());
    CHECK(*frac <= prev);
    prev = *frac;
  }
  CHECK(*dist.fraction_at_least(Rating::poor) == doctest::Approx(1.0));
}

TEST_CASE("empty input reports an absent fraction and empty histograms") {
  RatingDistribution dist = rating_distribution({});
  CHECK(dist.rated == 0);
  CHECK_FALSE(dist.fraction_at_least(Rating::above_average).has_value());
  json j = dist.to_json();
  CHECK(j["fraction_at_least_above_average"].is_null());
}

TEST_CASE("histogram bins sum to the rated count; unrated stay separate") {
  std::vector<RatedEntry> entries = {rated("a", Rating::good), rated("b", Rating::poor),
                                     unrated("c"), rated("d", Rating::excellent),
                                     unrated("e")};
  RatingDistribution dist = rating_distribution(entries);
  CHECK(dist.rated == 3);
  CHECK(dist.unrated == 2);
  for (const auto& [name, counts] : dist.per_dimension) {
    std::int64_t sum = 0;
    for (std::int64_t c : counts) sum += c;
    CHECK(sum == dist.rated);
  }
  std::int64_t overall_sum = 0;
  for (std::int64_t c : dist.overall) overall_sum += c;
  CHECK(overall_sum == dist.rated);
}

TEST_CASE("rated entries round-trip through JSON") {
  RatedEntry entry = rated("p1#2", Rating::above_average);
  entry.statement_ordinal = 2;
  RatedEntry back = RatedEntry::from_json(entry.to_json());
  CHECK(back.problem_id == "p1#2");
  CHECK(back.statement_ordinal == 2);
  REQUIRE(back.assessment.has_value());
  CHECK(back.assessment->overall == Rating::above_average);

  RatedEntry missing = RatedEntry::from_json(unrated("u").to_json());
  CHECK_FALSE(missing.assessment.has_value());
}

}  // TEST_SUITE
