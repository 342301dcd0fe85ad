#include <doctest.h>

#include <set>

#include "autoform/bench.hpp"

using namespace autoform;

namespace {

std::vector<BenchStatement> corpus(int n) {
  std::vector<BenchStatement> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"b" + std::to_string(i),
                   "theorem test : " + std::to_string(i) + " = " + std::to_string(i) +
                       " := by sorry"});
  }
  return out;
}

std::shared_ptr<StubVerifier> pass_fail_stub() {
  // rfl proofs pass clean; sorry keeps its warning; fooBar errors out
  return StubVerifier::from_json(json::parse(R"({
    "entries": [
      {"match": "fooBar",
       "response": {"messages":[{"severity":"error","pos":{"line":1,"column":1},
                                 "data":"unknown identifier 'fooBar'"}]}},
      {"match": "sorry",
       "response": {"messages":[{"severity":"warning","pos":{"line":1,"column":8},
                                 "data":"declaration uses 'sorry'"}]}}
    ],
    "default": {"messages": []}
  })"));
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("sampling the whole population is a permutation") {
  auto statements = corpus(12);
  auto sample = sample_problems(statements, 12, 7);
  CHECK(sample.size() == 12);
  std::set<std::string> ids;
  for (const auto& s : sample) ids.insert(s.problem_id);
  CHECK(ids.size() == 12);
}

TEST_CASE("sampling is deterministic given the seed") {
  auto statements = corpus(30);
  auto a = sample_problems(statements, 10, 42);
  auto b = sample_problems(statements, 10, 42);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].problem_id == b[i].problem_id);
  }
  auto c = sample_problems(statements, 10, 43);
  bool all_equal = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].problem_id != c[i].problem_id) all_equal = false;
  }
  CHECK_FALSE(all_equal);
}

TEST_CASE("edge sample sizes") {
  auto statements = corpus(5);
  CHECK(sample_problems(statements, 0, 1).empty());
  CHECK_THROWS_AS(sample_problems(statements, 6, 1), SampleTooLarge);
}

TEST_CASE("splice_proof: term replies replace the placeholder") {
  CHECK(splice_proof("theorem t : 1 = 1 := by sorry", ":= rfl") ==
        "theorem t : 1 = 1 := rfl");
  CHECK(splice_proof("theorem t : 1 = 1 := by sorry", "by norm_num") ==
        "theorem t : 1 = 1 := by norm_num");
  CHECK(splice_proof("theorem t : 1 = 1 := by sorry", "rfl") ==
        "theorem t : 1 = 1 := rfl");
}

TEST_CASE("splice_proof: full declarations are extracted") {
  CHECK(splice_proof("theorem t : 1 = 1 := by sorry",
                     "```lean\ntheorem t : 1 = 1 := by norm_num\n```") ==
        "theorem t : 1 = 1 := by norm_num");
}

TEST_CASE("attempt_proof: verified proofs solve, sorry does not") {
  auto stub = pass_fail_stub();
  auto backend = ScriptedBackend::from_json(json::parse(R"([
    {"match": "1 = 1", "response": ":= rfl"},
    {"match": "2 = 2", "response": ":= by sorry"},
    {"match": "3 = 3", "response": ":= fooBar"}
  ])"));
  Gateway prover(GatewayConfig::offline_defaults(), backend);

  AttemptResult solved =
      attempt_proof("theorem test : 1 = 1 := by sorry", prover, *stub, 1);
  CHECK(solved.solved);
  CHECK(solved.proof == "theorem test : 1 = 1 := rfl");

  AttemptResult sorry_reply =
      attempt_proof("theorem test : 2 = 2 := by sorry", prover, *stub, 1);
  CHECK_FALSE(sorry_reply.solved);  // sorry is not a proof

  AttemptResult ill_typed =
      attempt_proof("theorem test : 3 = 3 := by sorry", prover, *stub, 1);
  CHECK_FALSE(ill_typed.solved);  // rejected by the verifier
}

TEST_CASE("prover outages flag the attempt as unsolved") {
  auto stub = pass_fail_stub();
  auto backend = std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Entry>{});
  Gateway prover(GatewayConfig::offline_defaults(), backend);
  AttemptResult result =
      attempt_proof("theorem test : 1 = 1 := by sorry", prover, *stub, 1);
  CHECK_FALSE(result.solved);
  CHECK(result.prover_unavailable);
}

TEST_CASE("benchmark: scripted prover solving half the sample") {
  auto statements = corpus(4);
  auto stub = pass_fail_stub();
  // problems 1 and 3 get valid proofs on the first attempt, others never do
  auto backend = ScriptedBackend::from_json(json::parse(R"([
    {"match": "1 = 1", "response": ":= rfl"},
    {"match": "3 = 3", "response": ":= rfl"},
    {"match": "theorem", "response": ":= fooBar"}
  ])"));
  Gateway prover(GatewayConfig::offline_defaults(), backend);

  BenchConfig cfg;
  cfg.sample_size = 4;
  cfg.attempts_per_problem = 32;
  cfg.seed = 5;
  ProverBenchResult result = run_benchmark(statements, cfg, prover, *stub);
  CHECK(result.pass_rate == doctest::Approx(0.5));

  for (const auto& p : result.problems) {
    if (p.solved) {
      REQUIRE(p.solving_attempt.has_value());
      CHECK(*p.solving_attempt == 1);
      CHECK(p.attempts_used == 1);  // early stop on first success
      // solved implies the stored proof re-verifies clean
      CHECK(stub->verify(p.proof).status == VerifyStatus::pass);
    } else {
      CHECK(p.attempts_used == 32);
    }
  }
}

TEST_CASE("a prover that succeeds only on attempt 7 needs attempts >= 7") {
  auto statements = corpus(1);
  auto stub = pass_fail_stub();
  auto backend = ScriptedBackend::from_json(json::parse(R"([
    {"match": "theorem", "seed": 7, "response": ":= rfl"},
    {"match": "theorem", "response": ":= fooBar"}
  ])"));
  Gateway prover(GatewayConfig::offline_defaults(), backend);

  BenchConfig one;
  one.sample_size = 1;
  one.attempts_per_problem = 1;
  one.seed = 0;
  CHECK(run_benchmark(statements, one, prover, *stub).pass_rate == doctest::Approx(0.0));

  BenchConfig many = one;
  many.attempts_per_problem = 32;
  ProverBenchResult result = run_benchmark(statements, many, prover, *stub);
  CHECK(result.pass_rate == doctest::Approx(1.0));
  CHECK(result.problems[0].solving_attempt == 7);
}

TEST_CASE("pass rate is monotone in the attempt cap on recorded streams") {
  std::vector<std::vector<bool>> streams = {
      {false, false, true},
      {true},
      {false, false, false, false},
      {false, true, false},
      {},
  };
  double prev = 0.0;
  for (int cap = 0; cap <= 6; ++cap) {
    double rate = pass_rate_at(streams, cap);
    CHECK(rate >= prev);
    prev = rate;
  }
  CHECK(pass_rate_at(streams, 1) == doctest::Approx(0.2));
  CHECK(pass_rate_at(streams, 2) == doctest::Approx(0.4));
  CHECK(pass_rate_at(streams, 3) == doctest::Approx(0.6));
}

TEST_CASE("benchmark result serializes config echo and per-problem records") {
  auto statements = corpus(2);
  auto stub = pass_fail_stub();
  auto backend = ScriptedBackend::from_json(json::parse(R"([
    {"match": "theorem", "response": ":= rfl"}
  ])"));
  Gateway prover(GatewayConfig::offline_defaults(), backend);
  BenchConfig cfg;
  cfg.sample_size = 2;
  cfg.attempts_per_problem = 3;
  cfg.seed = 11;
  json j = run_benchmark(statements, cfg, prover, *stub).to_json();
  CHECK(j["config"]["sample_size"] == 2);
  CHECK(j["config"]["attempts_per_problem"] == 3);
  CHECK(j["problems"].size() == 2);
  CHECK(j["pass_rate"] == 1.0);
}

}  // TEST_SUITE
