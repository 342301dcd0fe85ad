#include <doctest.h>

#include <map>
#include <random>

#include "autoform/jsonl.hpp"
#include "autoform/pipeline.hpp"
#include "autoform/report.hpp"

using namespace autoform;

namespace {

const std::string kScenario = std::string(AUTOFORM_SOURCE_DIR) + "/tests/fixtures/scenario";

struct Harness {
  std::shared_ptr<ScriptedBackend> backend;
  Gateway gateway;
  std::shared_ptr<Verifier> verifier;
  std::vector<FewShotExemplar> exemplars;

  Harness()
      : backend(ScriptedBackend::from_file(kScenario + "/mock_llm.json")),
        gateway(GatewayConfig::offline_defaults(), backend),
        verifier(StubVerifier::from_file(kScenario + "/stub_verifier.json")),
        exemplars(default_exemplars()) {}

  PipelineServices services() {
    return PipelineServices{gateway, *verifier, builtin_prompts(), exemplars};
  }
};

std::vector<Problem> scenario_problems() {
  return problems_from_jsonl(read_file(kScenario + "/problems.jsonl"));
}

RunConfig scenario_config(int concurrency = 1) {
  RunConfig cfg;
  cfg.samples_per_problem = 5;
  cfg.feedback_rounds = 1;
  cfg.few_shot = true;
  cfg.translator_temperature = 1.0;
  cfg.dedup_normalized = true;
  cfg.concurrency = concurrency;
  return cfg;
}

std::map<std::string, ProblemOutcome> outcomes_by_id(const RunLog& log) {
  std::map<std::string, ProblemOutcome> out;
  for (ProblemOutcome& o : replay_outcomes(log)) {
    out[o.problem_id] = std::move(o);
  }
  return out;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("canonical_rename replaces only the declaration name") {
  CHECK(canonical_rename("theorem test : 1=1 := by sorry", "p7", 2) ==
        "theorem p7_2 : 1=1 := by sorry");
  CHECK(canonical_rename("lemma aux (n : ℕ) : n = n := by sorry", "p3", 1) ==
        "lemma p3_1 (n : ℕ) : n = n := by sorry");
  // unicode elsewhere in the body is untouched
  CHECK(canonical_rename("theorem test (h₀ : x ≠ 1) : x^2 ≥ 0 := by sorry",
                         "q", 1) ==
        "theorem q_1 (h₀ : x ≠ 1) : x^2 ≥ 0 := by sorry");
}

TEST_CASE("canonical_rename names anonymous examples") {
  CHECK(canonical_rename("example : 1 = 1 := by sorry", "p9", 1) ==
        "theorem p9_1 : 1 = 1 := by sorry");
}

TEST_CASE("canonical_rename sanitizes ids and is idempotent") {
  std::string once = canonical_rename("theorem test : True := by sorry", "imo-1988/q6", 3);
  CHECK(once == "theorem imo_1988_q6_3 : True := by sorry");
  CHECK(canonical_rename(once, "imo-1988/q6", 3) == once);
  CHECK_THROWS_AS(canonical_rename("no declaration here", "p", 1), NoTheoremFound);
}

TEST_CASE("normalize_statement ignores naming and whitespace") {
  CHECK(normalize_statement("theorem a :  1 = 1 := by sorry") ==
        normalize_statement("theorem b : 1 = 1 :=\n  by sorry"));
  CHECK(normalize_statement("theorem a : 1 = 1 := by sorry") !=
        normalize_statement("theorem a : 1 = 2 := by sorry"));
}

TEST_CASE("run config hashing covers semantic fields only") {
  RunConfig a = scenario_config(1);
  RunConfig b = scenario_config(8);
  CHECK(a.config_hash() == b.config_hash());
  b.samples_per_problem = 3;
  CHECK(a.config_hash() != b.config_hash());
}

TEST_CASE("first-pass acceptance never issues a feedback round") {
  Harness h;
  auto services = h.services();
  std::vector<Problem> problems = scenario_problems();
  ProblemOutcome outcome = formalize_problem(problems[0], scenario_config(), services);

  CHECK(outcome.status == ProblemStatus::accepted);
  CHECK(outcome.first_pass);
  CHECK(outcome.attempts.size() == 5);  // round 0 only
  for (const auto& [role, prompt] : h.backend->served()) {
    CHECK(prompt.find("mistranslated") == std::string::npos);
  }
  // all five samples accepted; dedup keeps one statement, renamed
  REQUIRE(outcome.accepted_statements.size() == 1);
  CHECK(outcome.accepted_statements[0].rfind("theorem p01_1", 0) == 0);
  REQUIRE(outcome.provenance.size() == 1);
  CHECK(outcome.provenance[0].round == 0);
  CHECK(outcome.provenance[0].sample_index == 1);
}

TEST_CASE("verification failures feed the compiler message back verbatim") {
  Harness h;
  auto services = h.services();
  std::vector<Problem> problems = scenario_problems();
  ProblemOutcome outcome = formalize_problem(problems[6], scenario_config(), services);

  CHECK(outcome.status == ProblemStatus::accepted);
  CHECK_FALSE(outcome.first_pass);
  CHECK(outcome.attempts.size() == 10);  // 5 failed + 5 feedback samples

  bool saw_feedback_prompt = false;
  for (const auto& [role, prompt] : h.backend->served()) {
    if (role == "translator" && prompt.find("mistranslated") != std::string::npos) {
      saw_feedback_prompt = true;
      CHECK(prompt.find("line 1, col 28: unknown identifier 'succNat'") !=
            std::string::npos);
      CHECK(prompt.find("theorem test (n : ℕ) : n < succNat n := by sorry") !=
            std::string::npos);
    }
  }
  CHECK(saw_feedback_prompt);
}

TEST_CASE("consistency failures are preferred as feedback context") {
  Harness h;
  auto services = h.services();
  std::vector<Problem> problems = scenario_problems();
  ProblemOutcome outcome = formalize_problem(problems[7], scenario_config(), services);

  CHECK(outcome.status == ProblemStatus::accepted);
  CHECK_FALSE(outcome.first_pass);

  bool saw_feedback_prompt = false;
  for (const auto& [role, prompt] : h.backend->served()) {
    if (role == "translator" && prompt.find("mistranslated") != std::string::npos) {
      saw_feedback_prompt = true;
      // checker analysis, not compiler output, goes into the prompt
      CHECK(prompt.find("the goals differ") != std::string::npos);
    }
  }
  CHECK(saw_feedback_prompt);
}

TEST_CASE("exhausted rounds leave the problem failed") {
  Harness h;
  auto services = h.services();
  std::vector<Problem> problems = scenario_problems();
  ProblemOutcome outcome = formalize_problem(problems[8], scenario_config(), services);
  CHECK(outcome.status == ProblemStatus::failed);
  CHECK(outcome.accepted_statements.empty());
  CHECK(outcome.attempts.size() == 10);
}

TEST_CASE("scenario corpus: exact outcome multiset") {
  Harness h;
  auto services = h.services();
  RunLog log = run_corpus(scenario_problems(), scenario_config(), services);

  auto outcomes = outcomes_by_id(log);
  REQUIRE(outcomes.size() == 10);

  int first_pass = 0, with_feedback = 0, failed = 0;
  for (const auto& [id, outcome] : outcomes) {
    if (outcome.status == ProblemStatus::accepted) {
      if (outcome.first_pass) {
        ++first_pass;
      } else {
        ++with_feedback;
      }
    } else {
      ++failed;
    }
  }
  CHECK(first_pass == 6);
  CHECK(with_feedback == 2);
  CHECK(failed == 2);

  CHECK(outcomes["p01"].first_pass);
  CHECK(outcomes["p07"].status == ProblemStatus::accepted);
  CHECK_FALSE(outcomes["p07"].first_pass);
  CHECK(outcomes["p08"].status == ProblemStatus::accepted);
  CHECK_FALSE(outcomes["p08"].first_pass);
  CHECK(outcomes["p09"].status == ProblemStatus::failed);
  CHECK(outcomes["p10"].status == ProblemStatus::failed);
}

TEST_CASE("acceptance invariants hold for every attempt") {
  Harness h;
  auto services = h.services();
  RunLog log = run_corpus(scenario_problems(), scenario_config(), services);

  std::int64_t attempted = 0, fv_passing = 0, accepted = 0;
  for (const AttemptRecord* rec : log.attempts()) {
    ++attempted;
    bool fv_ok = rec->verification.status == VerifyStatus::pass ||
                 rec->verification.status == VerifyStatus::pass_with_sorry;
    if (fv_ok) ++fv_passing;
    // verdict present exactly when verification passed
    CHECK(rec->verdict.has_value() == fv_ok);
    if (rec->outcome == AttemptOutcome::accepted) {
      ++accepted;
      CHECK(fv_ok);
      REQUIRE(rec->verdict.has_value());
      CHECK(rec->verdict->same);
    }
  }
  CHECK(accepted <= fv_passing);
  CHECK(fv_passing <= attempted);
  CHECK(attempted == 70);  // 6 problems * 5 samples + 4 problems * 10

  PipelineStats stats = compute_pipeline_stats(log, scenario_config());
  CHECK(stats.total == 10);
  CHECK(stats.fv_first == 8);
  CHECK(stats.fv_feedback == 1);
  CHECK(stats.cc_first == 6);
  CHECK(stats.cc_feedback == 2);
}

TEST_CASE("identical scripts produce identical logs regardless of concurrency") {
  Harness h1;
  auto s1 = h1.services();
  RunLog a = run_corpus(scenario_problems(), scenario_config(1), s1);

  Harness h2;
  auto s2 = h2.services();
  RunLog b = run_corpus(scenario_problems(), scenario_config(4), s2);

  CHECK(a.serialize_without_timestamps() == b.serialize_without_timestamps());
}

TEST_CASE("log serialization round-trips") {
  Harness h;
  auto services = h.services();
  RunLog log = run_corpus(scenario_problems(), scenario_config(), services);
  RunLog back = RunLog::parse(log.serialize());
  CHECK(back.serialize() == log.serialize());
  CHECK(back.header.corpus_hash == log.header.corpus_hash);
  CHECK(back.events.size() == log.events.size());
}

TEST_CASE("feedback_rounds=0 never issues round-1 events") {
  Harness h;
  auto services = h.services();
  RunConfig cfg = scenario_config();
  cfg.feedback_rounds = 0;
  std::vector<Problem> problems = scenario_problems();
  ProblemOutcome outcome = formalize_problem(problems[6], cfg, services);
  CHECK(outcome.status == ProblemStatus::failed);
  CHECK(outcome.attempts.size() == 5);
  for (const AttemptRecord& rec : outcome.attempts) {
    CHECK(rec.round == 0);
  }
}

TEST_CASE("zero-shot prompts contain no exemplar text") {
  auto backend = ScriptedBackend::from_json(json::parse(R"([
    {"match": ["Translate the next problem", "n + 0 = n"],
     "response": "theorem test (n : ℕ) : n + 0 = n := by sorry"},
    {"match": ["Convert the formal statement"], "response": "For every n, n + 0 = n."},
    {"match": ["mathematical essence"],
     "response": "'''{\"Same\": true, \"Analysis\": \"match\"}'''"}
  ])"));
  Gateway gateway(GatewayConfig::offline_defaults(), backend);
  auto verifier = StubVerifier::from_json(json::parse(
      R"({"entries": [], "default": {"messages":[{"severity":"warning",
          "data":"declaration uses 'sorry'"}]}})"));
  std::vector<FewShotExemplar> exemplars = default_exemplars();
  PipelineServices services{gateway, *verifier, builtin_prompts(), exemplars};

  RunConfig cfg = scenario_config();
  cfg.few_shot = false;
  Problem p = scenario_problems()[0];
  ProblemOutcome outcome = formalize_problem(p, cfg, services);
  CHECK(outcome.status == ProblemStatus::accepted);

  for (const auto& [role, prompt] : backend->served()) {
    if (role != "translator") continue;
    for (const auto& ex : exemplars) {
      CHECK(prompt.find(ex.lean_statement) == std::string::npos);
    }
  }
}

TEST_CASE("dedup keeps semantically distinct statements apart") {
  std::vector<AttemptRecord> attempts;
  auto accepted = [&](int sample, const std::string& lean) {
    AttemptRecord rec;
    rec.problem_id = "d1";
    rec.round = 0;
    rec.sample_index = sample;
    rec.lean = lean;
    rec.verification.status = VerifyStatus::pass_with_sorry;
    rec.backtranslation = "b";
    rec.verdict = ConsistencyVerdict{true, "ok"};
    rec.outcome = AttemptOutcome::accepted;
    attempts.push_back(std::move(rec));
  };
  accepted(1, "theorem test : 1 = 1 := by sorry");
  accepted(2, "theorem test :  1 = 1 :=  by sorry");       // whitespace variant
  accepted(3, "theorem other_name : 1 = 1 := by sorry");   // name variant
  accepted(4, "theorem test : 2 = 2 := by sorry");         // genuinely different

  RunConfig cfg = scenario_config();
  ProblemOutcome outcome = derive_outcome("d1", attempts, cfg);
  REQUIRE(outcome.accepted_statements.size() == 2);
  CHECK(outcome.accepted_statements[0] == "theorem d1_1 : 1 = 1 := by sorry");
  CHECK(outcome.accepted_statements[1] == "theorem d1_2 : 2 = 2 := by sorry");

  // no two survivors are equal after normalization
  CHECK(normalize_statement(outcome.accepted_statements[0]) !=
        normalize_statement(outcome.accepted_statements[1]));

  cfg.dedup_normalized = false;
  ProblemOutcome raw = derive_outcome("d1", attempts, cfg);
  CHECK(raw.accepted_statements.size() == 4);
}

TEST_CASE("dataset lines carry statements and provenance") {
  Harness h;
  auto services = h.services();
  std::vector<Problem> problems = scenario_problems();
  RunLog log = run_corpus(problems, scenario_config(), services);
  std::string dataset = dataset_jsonl(problems, replay_outcomes(log));

  std::vector<json> lines = parse_jsonl(dataset);
  CHECK(lines.size() == 8);
  for (const json& line : lines) {
    CHECK(line.contains("problem_id"));
    CHECK_FALSE(line["natural_language"].get<std::string>().empty());
    CHECK(line["formal_statements"].is_array());
    CHECK(line["formal_statements"].size() == line["provenance"].size());
    CHECK_FALSE(line["formal_statements"].empty());
  }
}

TEST_CASE("resume: any event-prefix cut converges to the uninterrupted log") {
  Harness h;
  auto services = h.services();
  std::vector<Problem> problems = scenario_problems();
  RunConfig cfg = scenario_config();
  RunLog full = run_corpus(problems, cfg, services);
  std::string want = full.serialize_without_timestamps();

  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 6; ++trial) {
    std::size_t cut = rng() % (full.events.size() + 1);
    RunLog truncated;
    truncated.header = full.header;
    truncated.events.assign(full.events.begin(),
                            full.events.begin() + static_cast<std::ptrdiff_t>(cut));

    Harness fresh;
    auto fresh_services = fresh.services();
    RunLog resumed = resume_run(truncated, problems, cfg, fresh_services);
    CHECK(resumed.serialize_without_timestamps() == want);
  }
}

TEST_CASE("resume of a complete log re-executes nothing") {
  Harness h;
  auto services = h.services();
  std::vector<Problem> problems = scenario_problems();
  RunConfig cfg = scenario_config();
  RunLog full = run_corpus(problems, cfg, services);

  Harness fresh;
  auto fresh_services = fresh.services();
  RunLog resumed = resume_run(full, problems, cfg, fresh_services);
  CHECK(fresh.backend->call_count() == 0);
  CHECK(resumed.serialize_without_timestamps() == full.serialize_without_timestamps());
}

TEST_CASE("resume with a changed config or corpus is rejected") {
  Harness h;
  auto services = h.services();
  std::vector<Problem> problems = scenario_problems();
  RunConfig cfg = scenario_config();
  RunLog full = run_corpus(problems, cfg, services);

  RunConfig changed = cfg;
  changed.samples_per_problem = 3;
  Harness fresh;
  auto fresh_services = fresh.services();
  CHECK_THROWS_AS(resume_run(full, problems, changed, fresh_services), ConfigMismatch);

  std::vector<Problem> other = problems;
  other.pop_back();
  CHECK_THROWS_AS(resume_run(full, other, cfg, fresh_services), ConfigMismatch);
}

TEST_CASE("infrastructure outages mark the problem incomplete, not failed") {
  // empty script: the very first translation call raises ScriptMiss
  auto backend = std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Entry>{});
  Gateway gateway(GatewayConfig::offline_defaults(), backend);
  auto verifier = StubVerifier::from_json(json::parse(
      R"({"entries": [], "default": {"messages": []}})"));
  std::vector<FewShotExemplar> exemplars = default_exemplars();
  PipelineServices services{gateway, *verifier, builtin_prompts(), exemplars};

  Problem p;
  p.id = "x1";
  p.source_id = "s";
  p.statement = "Prove something.";
  ProblemOutcome outcome = formalize_problem(p, scenario_config(), services);
  CHECK(outcome.status == ProblemStatus::incomplete);
  CHECK_FALSE(outcome.error.empty());

  RunLog log = run_corpus({p}, scenario_config(), services);
  REQUIRE(log.incompletes().size() == 1);
  CHECK(log.incompletes()[0]->problem_id == "x1");
}

TEST_CASE("duplicate problem ids are rejected") {
  Harness h;
  auto services = h.services();
  std::vector<Problem> problems = scenario_problems();
  problems.push_back(problems[0]);
  CHECK_THROWS_AS(run_corpus(problems, scenario_config(), services), Error);
}

}  // TEST_SUITE
