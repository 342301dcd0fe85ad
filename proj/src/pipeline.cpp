#include "autoform/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <condition_variable>
#include <fstream>
#include <future>
#include <mutex>
#include <set>
#include <thread>

#include "autoform/clock.hpp"
#include "autoform/jsonl.hpp"

namespace autoform {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool is_ident_byte(unsigned char c) {
  return std::isalnum(c) || c == '_' || c == '\'' || c == '.' || c >= 0x80;
}

struct DeclLocation {
  std::size_t keyword_begin = std::string::npos;
  std::size_t keyword_end = 0;
  std::size_t name_begin = 0;
  std::size_t name_end = 0;  // == name_begin when the declaration is anonymous
  bool is_example = false;
};

std::optional<DeclLocation> locate_declaration(const std::string& lean) {
  static constexpr std::array<const char*, 3> kws = {"theorem", "lemma", "example"};
  DeclLocation loc;
  for (const char* kw : kws) {
    std::size_t len = std::char_traits<char>::length(kw);
    std::size_t pos = 0;
    while ((pos = lean.find(kw, pos)) != std::string::npos) {
      bool left_ok = pos == 0 || !is_ident_byte(static_cast<unsigned char>(lean[pos - 1]));
      bool right_ok = pos + len >= lean.size() ||
                      !is_ident_byte(static_cast<unsigned char>(lean[pos + len]));
      if (left_ok && right_ok && pos < loc.keyword_begin) {
        loc.keyword_begin = pos;
        loc.keyword_end = pos + len;
        loc.is_example = std::string(kw) == "example";
      }
      pos += len;
    }
  }
  if (loc.keyword_begin == std::string::npos) return std::nullopt;

  std::size_t cursor = loc.keyword_end;
  while (cursor < lean.size() && (lean[cursor] == ' ' || lean[cursor] == '\t')) ++cursor;
  loc.name_begin = cursor;
  if (!loc.is_example) {
    while (cursor < lean.size() && is_ident_byte(static_cast<unsigned char>(lean[cursor])) &&
           lean[cursor] != '\n') {
      ++cursor;
    }
  }
  loc.name_end = cursor;
  if (loc.is_example) loc.name_end = loc.name_begin;
  return loc;
}

std::string sanitize_identifier(const std::string& raw) {
  std::string out;
  for (unsigned char c : raw) {
    out.push_back(std::isalnum(c) ? static_cast<char>(c) : '_');
  }
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out[0]))) {
    out = "p" + out;
  }
  return out;
}

std::string rename_declaration(const std::string& lean, const std::string& name) {
  auto loc = locate_declaration(lean);
  if (!loc.has_value()) {
    throw NoTheoremFound("no declaration header to rename");
  }
  std::string keyword =
      loc->is_example
          ? "theorem"
          : lean.substr(loc->keyword_begin, loc->keyword_end - loc->keyword_begin);
  std::size_t rest_begin = loc->is_example ? loc->keyword_end : loc->name_end;
  return lean.substr(0, loc->keyword_begin) + keyword + " " + name + lean.substr(rest_begin);
}

std::string collapse_whitespace(const std::string& s) {
  std::string out;
  bool pending = false;
  for (unsigned char c : s) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      pending = !out.empty();
      continue;
    }
    if (pending) {
      out.push_back(' ');
      pending = false;
    }
    out.push_back(static_cast<char>(c));
  }
  return out;
}

}  // namespace

json RunConfig::semantic_json() const {
  return {{"samples_per_problem", samples_per_problem},
          {"feedback_rounds", feedback_rounds},
          {"few_shot", few_shot},
          {"translator_temperature", translator_temperature},
          {"dedup_normalized", dedup_normalized},
          {"seed", seed}};
}

std::string RunConfig::config_hash() const {
  return fnv1a64_hex(semantic_json().dump());
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  cfg.samples_per_problem = j.value("samples_per_problem", cfg.samples_per_problem);
  cfg.feedback_rounds = j.value("feedback_rounds", cfg.feedback_rounds);
  cfg.few_shot = j.value("few_shot", cfg.few_shot);
  cfg.translator_temperature = j.value("translator_temperature", cfg.translator_temperature);
  cfg.dedup_normalized = j.value("dedup_normalized", cfg.dedup_normalized);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.concurrency = j.value("concurrency", cfg.concurrency);
  return cfg;
}

std::string attempt_outcome_name(AttemptOutcome o) {
  switch (o) {
    case AttemptOutcome::fv_fail: return "fv_fail";
    case AttemptOutcome::cc_fail: return "cc_fail";
    case AttemptOutcome::accepted: return "accepted";
  }
  return "fv_fail";
}

std::optional<AttemptOutcome> attempt_outcome_from_name(const std::string& name) {
  if (name == "fv_fail") return AttemptOutcome::fv_fail;
  if (name == "cc_fail") return AttemptOutcome::cc_fail;
  if (name == "accepted") return AttemptOutcome::accepted;
  return std::nullopt;
}

json AttemptRecord::to_json() const {
  json j = {{"kind", "attempt"},
            {"problem_id", problem_id},
            {"sample_index", sample_index},
            {"round", round},
            {"lean", lean},
            {"verification", verification.to_json()},
            {"outcome", attempt_outcome_name(outcome)},
            {"ts_ms", ts_ms}};
  j["backtranslation"] = backtranslation.has_value() ? json(*backtranslation) : json(nullptr);
  j["verdict"] = verdict.has_value()
                     ? json{{"same", verdict->same}, {"analysis", verdict->analysis}}
                     : json(nullptr);
  return j;
}

AttemptRecord AttemptRecord::from_json(const json& j) {
  AttemptRecord r;
  r.problem_id = j.at("problem_id").get<std::string>();
  r.sample_index = j.at("sample_index").get<int>();
  r.round = j.at("round").get<int>();
  r.lean = j.value("lean", "");
  r.verification = VerificationResult::from_json(j.at("verification"));
  if (j.contains("backtranslation") && j["backtranslation"].is_string()) {
    r.backtranslation = j["backtranslation"].get<std::string>();
  }
  if (j.contains("verdict") && j["verdict"].is_object()) {
    ConsistencyVerdict v;
    v.same = j["verdict"].value("same", false);
    v.analysis = j["verdict"].value("analysis", "");
    r.verdict = v;
  }
  r.outcome = attempt_outcome_from_name(j.value("outcome", "fv_fail"))
                  .value_or(AttemptOutcome::fv_fail);
  r.ts_ms = j.value("ts_ms", std::int64_t{0});
  return r;
}

// ---------------------------------------------------------------------------
// RunLog

namespace {

json header_to_json(const RunHeader& h) {
  return {{"kind", "header"},
          {"config", h.config},
          {"config_hash", h.config_hash},
          {"corpus_hash", h.corpus_hash},
          {"created_at_ms", h.created_at_ms},
          {"version", h.version}};
}

json event_to_json(const RunEvent& event) {
  if (std::holds_alternative<AttemptRecord>(event)) {
    return std::get<AttemptRecord>(event).to_json();
  }
  const auto& inc = std::get<IncompleteEvent>(event);
  return {{"kind", "incomplete"},
          {"problem_id", inc.problem_id},
          {"error", inc.error},
          {"ts_ms", inc.ts_ms}};
}

void strip_timestamps(json& j) {
  j.erase("ts_ms");
  j.erase("created_at_ms");
}

}  // namespace

std::string RunLog::serialize() const {
  std::string out = header_to_json(header).dump() + "\n";
  for (const auto& event : events) {
    out += event_to_json(event).dump();
    out += "\n";
  }
  return out;
}

std::string RunLog::serialize_without_timestamps() const {
  json h = header_to_json(header);
  strip_timestamps(h);
  std::string out = h.dump() + "\n";
  for (const auto& event : events) {
    json e = event_to_json(event);
    strip_timestamps(e);
    out += e.dump();
    out += "\n";
  }
  return out;
}

RunLog RunLog::parse(const std::string& text) {
  std::vector<json> lines = parse_jsonl(text);
  if (lines.empty() || lines[0].value("kind", "") != "header") {
    throw Error("run log is missing its header line");
  }
  RunLog log;
  log.header.config = lines[0].value("config", json::object());
  log.header.config_hash = lines[0].value("config_hash", "");
  log.header.corpus_hash = lines[0].value("corpus_hash", "");
  log.header.created_at_ms = lines[0].value("created_at_ms", std::int64_t{0});
  log.header.version = lines[0].value("version", "");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::string kind = lines[i].value("kind", "");
    if (kind == "attempt") {
      log.events.emplace_back(AttemptRecord::from_json(lines[i]));
    } else if (kind == "incomplete") {
      IncompleteEvent inc;
      inc.problem_id = lines[i].value("problem_id", "");
      inc.error = lines[i].value("error", "");
      inc.ts_ms = lines[i].value("ts_ms", std::int64_t{0});
      log.events.emplace_back(std::move(inc));
    } else {
      throw Error("unknown run log event kind: " + kind);
    }
  }
  return log;
}

RunLog RunLog::read_file(const std::string& path) {
  return parse(autoform::read_file(path));
}

std::vector<const AttemptRecord*> RunLog::attempts() const {
  std::vector<const AttemptRecord*> out;
  for (const auto& event : events) {
    if (std::holds_alternative<AttemptRecord>(event)) {
      out.push_back(&std::get<AttemptRecord>(event));
    }
  }
  return out;
}

std::vector<const IncompleteEvent*> RunLog::incompletes() const {
  std::vector<const IncompleteEvent*> out;
  for (const auto& event : events) {
    if (std::holds_alternative<IncompleteEvent>(event)) {
      out.push_back(&std::get<IncompleteEvent>(event));
    }
  }
  return out;
}

ResumeCache build_resume_cache(const RunLog& log) {
  ResumeCache cache;
  for (const AttemptRecord* rec : log.attempts()) {
    cache[{rec->problem_id, rec->round, rec->sample_index}] = *rec;
  }
  return cache;
}

// ---------------------------------------------------------------------------
// Renaming and dedup

std::string canonical_rename(const std::string& lean, const std::string& problem_id,
                             int ordinal) {
  std::string name = sanitize_identifier(problem_id) + "_" + std::to_string(ordinal);
  return rename_declaration(lean, name);
}

std::string normalize_statement(const std::string& lean) {
  try {
    return collapse_whitespace(rename_declaration(lean, "x"));
  } catch (const NoTheoremFound&) {
    return collapse_whitespace(lean);
  }
}

// ---------------------------------------------------------------------------
// Outcome derivation

ProblemOutcome derive_outcome(const std::string& problem_id,
                              std::vector<AttemptRecord> attempts, const RunConfig& cfg) {
  ProblemOutcome outcome;
  outcome.problem_id = problem_id;
  outcome.attempts = std::move(attempts);

  std::set<std::string> seen;
  int ordinal = 0;
  for (const AttemptRecord& rec : outcome.attempts) {
    if (rec.outcome != AttemptOutcome::accepted) continue;
    if (rec.round == 0) outcome.first_pass = true;
    std::string key = cfg.dedup_normalized ? normalize_statement(rec.lean) : rec.lean;
    if (!seen.insert(key).second) continue;
    ++ordinal;
    outcome.accepted_statements.push_back(canonical_rename(rec.lean, problem_id, ordinal));
    outcome.provenance.push_back({rec.round, rec.sample_index});
  }
  outcome.status = outcome.accepted_statements.empty() ? ProblemStatus::failed
                                                       : ProblemStatus::accepted;
  return outcome;
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

AttemptRecord run_sample(const Problem& p, int round, int sample, const RunConfig& cfg,
                         PipelineServices& sv, const std::optional<FailureContext>& fail) {
  AttemptRecord rec;
  rec.problem_id = p.id;
  rec.round = round;
  rec.sample_index = sample;
  rec.ts_ms = wall_time_ms();

  std::string prompt =
      round == 0 ? build_translation_prompt(p.statement, sv.exemplars, cfg.few_shot, sv.prompts)
                 : build_feedback_prompt(p.statement, *fail, sv.prompts);
  ChatRequest req = sv.gateway.new_request(Role::translator);
  req.temperature = cfg.translator_temperature;
  req.messages.push_back({ChatMessage::Speaker::user, prompt});
  req.seed = cfg.seed + round * 100 + sample;
  ChatResponse resp = sv.gateway.complete(req);

  try {
    rec.lean = extract_lean_code(resp.text);
  } catch (const NoTheoremFound&) {
    rec.lean = trim(resp.text);
    rec.verification.status = VerifyStatus::error;
    rec.verification.messages.push_back(
        {Severity::error, 0, 0, "no Lean declaration found in completion"});
    rec.outcome = AttemptOutcome::fv_fail;
    return rec;
  }

  rec.verification = sv.verifier.verify(rec.lean);
  if (rec.verification.status != VerifyStatus::pass &&
      rec.verification.status != VerifyStatus::pass_with_sorry) {
    rec.outcome = AttemptOutcome::fv_fail;
    return rec;
  }

  ChatRequest back = sv.gateway.new_request(Role::backtranslator);
  back.messages.push_back(
      {ChatMessage::Speaker::user, build_backtranslation_prompt(rec.lean, sv.prompts)});
  back.seed = cfg.seed + round * 100 + sample;
  rec.backtranslation = trim(sv.gateway.complete(back).text);

  ConsistencyVerdict verdict;
  bool parsed = false;
  for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
    ChatRequest check = sv.gateway.new_request(Role::checker);
    check.messages.push_back(
        {ChatMessage::Speaker::user,
         build_consistency_prompt(p.statement, *rec.backtranslation, sv.prompts)});
    check.seed = attempt;
    try {
      verdict = parse_consistency_verdict(sv.gateway.complete(check).text);
      parsed = true;
    } catch (const VerdictUnparseable&) {
    }
  }
  if (!parsed) {
    // conservative: a false accept pollutes the dataset, a false reject
    // only costs a retry
    verdict.same = false;
    verdict.analysis = "unparseable verdict";
  }
  rec.verdict = verdict;
  rec.outcome = verdict.same ? AttemptOutcome::accepted : AttemptOutcome::cc_fail;
  return rec;
}

std::optional<FailureContext> build_failure_context(const std::vector<AttemptRecord>& attempts) {
  const AttemptRecord* best = nullptr;
  // prefer a consistency failure over a verification failure, latest first
  for (auto it = attempts.rbegin(); it != attempts.rend(); ++it) {
    if (it->outcome == AttemptOutcome::cc_fail) {
      best = &*it;
      break;
    }
  }
  if (best == nullptr) {
    for (auto it = attempts.rbegin(); it != attempts.rend(); ++it) {
      if (it->outcome == AttemptOutcome::fv_fail) {
        best = &*it;
        break;
      }
    }
  }
  if (best == nullptr) return std::nullopt;

  FailureContext fail;
  fail.failed_lean = best->lean;
  if (best->outcome == AttemptOutcome::cc_fail) {
    fail.stage = FailureStage::consistency;
    fail.error_text = best->verdict.has_value() ? best->verdict->analysis : "";
  } else {
    fail.stage = FailureStage::verification;
    fail.error_text = summarize_errors(best->verification);
  }
  if (fail.error_text.empty()) fail.error_text = "verification failed";
  return fail;
}

}  // namespace

ProblemOutcome formalize_problem(const Problem& p, const RunConfig& cfg,
                                 PipelineServices& services, const ResumeCache* cache) {
  std::vector<AttemptRecord> attempts;
  bool incomplete = false;
  std::string infra_error;

  for (int round = 0; round <= cfg.feedback_rounds && !incomplete; ++round) {
    std::optional<FailureContext> fail;
    if (round > 0) {
      bool accepted = std::any_of(attempts.begin(), attempts.end(), [](const auto& a) {
        return a.outcome == AttemptOutcome::accepted;
      });
      if (accepted) break;
      fail = build_failure_context(attempts);
      if (!fail.has_value()) break;  // nothing to feed back
    }

    int k = cfg.samples_per_problem;
    std::vector<std::optional<AttemptRecord>> slots(static_cast<std::size_t>(k));
    std::vector<std::pair<int, std::future<AttemptRecord>>> pending;
    for (int sample = 1; sample <= k; ++sample) {
      if (cache != nullptr) {
        auto it = cache->find({p.id, round, sample});
        if (it != cache->end()) {
          slots[static_cast<std::size_t>(sample - 1)] = it->second;
          continue;
        }
      }
      pending.emplace_back(sample, std::async(std::launch::async, [&, round, sample] {
                             return run_sample(p, round, sample, cfg, services, fail);
                           }));
    }
    for (auto& [sample, future] : pending) {
      try {
        slots[static_cast<std::size_t>(sample - 1)] = future.get();
      } catch (const Error& e) {
        if (!incomplete) {
          incomplete = true;
          infra_error = e.what();
        }
      }
    }
    for (auto& slot : slots) {
      if (slot.has_value()) attempts.push_back(std::move(*slot));
    }
  }

  ProblemOutcome outcome = derive_outcome(p.id, std::move(attempts), cfg);
  if (incomplete) {
    outcome.status = ProblemStatus::incomplete;
    outcome.error = infra_error;
  }
  return outcome;
}

std::string corpus_hash(const std::vector<Problem>& problems) {
  return fnv1a64_hex(problems_to_jsonl(problems));
}

RunLog run_corpus(const std::vector<Problem>& problems, const RunConfig& cfg,
                  PipelineServices& services, const std::string& log_path,
                  const ResumeCache* cache) {
  {
    std::set<std::string> ids;
    for (const Problem& p : problems) {
      if (!ids.insert(p.id).second) {
        throw Error("duplicate problem id in corpus: " + p.id);
      }
    }
  }

  RunLog log;
  log.header.config = cfg.semantic_json();
  log.header.config_hash = cfg.config_hash();
  log.header.corpus_hash = corpus_hash(problems);
  log.header.created_at_ms = wall_time_ms();

  std::ofstream out;
  if (!log_path.empty()) {
    out.open(log_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write run log: " + log_path);
    out << header_to_json(log.header).dump() << "\n";
    out.flush();
  }

  std::size_t n = problems.size();
  std::vector<std::optional<ProblemOutcome>> done(n);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      ProblemOutcome outcome = formalize_problem(problems[i], cfg, services, cache);
      {
        std::lock_guard<std::mutex> lock(mu);
        done[i] = std::move(outcome);
      }
      cv.notify_all();
    }
  };

  int worker_count = std::max(1, std::min<int>(cfg.concurrency, static_cast<int>(n)));
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(worker_count));
  for (int i = 0; i < worker_count; ++i) workers.emplace_back(worker);

  // events land in the log in corpus order regardless of worker interleaving
  for (std::size_t i = 0; i < n; ++i) {
    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [&] { return done[i].has_value(); });
    ProblemOutcome outcome = std::move(*done[i]);
    done[i].reset();
    lock.unlock();

    for (const AttemptRecord& rec : outcome.attempts) {
      log.events.emplace_back(rec);
      if (out.is_open()) {
        out << rec.to_json().dump() << "\n";
        out.flush();
      }
    }
    if (outcome.status == ProblemStatus::incomplete) {
      IncompleteEvent inc;
      inc.problem_id = outcome.problem_id;
      inc.error = outcome.error;
      inc.ts_ms = wall_time_ms();
      if (out.is_open()) {
        out << event_to_json(inc).dump() << "\n";
        out.flush();
      }
      log.events.emplace_back(std::move(inc));
    }
  }

  for (auto& t : workers) t.join();
  return log;
}

RunLog resume_run(const RunLog& prior, const std::vector<Problem>& problems,
                  const RunConfig& cfg, PipelineServices& services,
                  const std::string& log_path) {
  if (prior.header.config_hash != cfg.config_hash()) {
    throw ConfigMismatch("run configuration differs from the log header");
  }
  if (prior.header.corpus_hash != corpus_hash(problems)) {
    throw ConfigMismatch("corpus differs from the log header");
  }
  ResumeCache cache = build_resume_cache(prior);
  return run_corpus(problems, cfg, services, log_path, &cache);
}

std::vector<ProblemOutcome> replay_outcomes(const RunLog& log) {
  RunConfig cfg = RunConfig::from_json(log.header.config);

  std::vector<std::string> order;
  std::map<std::string, std::vector<AttemptRecord>> grouped;
  for (const AttemptRecord* rec : log.attempts()) {
    if (grouped.find(rec->problem_id) == grouped.end()) order.push_back(rec->problem_id);
    grouped[rec->problem_id].push_back(*rec);
  }
  std::map<std::string, std::string> incomplete;
  for (const IncompleteEvent* inc : log.incompletes()) {
    if (grouped.find(inc->problem_id) == grouped.end()) order.push_back(inc->problem_id);
    incomplete[inc->problem_id] = inc->error;
  }

  std::vector<ProblemOutcome> outcomes;
  for (const std::string& id : order) {
    ProblemOutcome outcome = derive_outcome(id, grouped[id], cfg);
    auto it = incomplete.find(id);
    if (it != incomplete.end()) {
      outcome.status = ProblemStatus::incomplete;
      outcome.error = it->second;
    }
    outcomes.push_back(std::move(outcome));
  }
  return outcomes;
}

std::string dataset_jsonl(const std::vector<Problem>& problems,
                          const std::vector<ProblemOutcome>& outcomes) {
  std::map<std::string, const Problem*> by_id;
  for (const Problem& p : problems) by_id[p.id] = &p;

  std::string out;
  for (const ProblemOutcome& outcome : outcomes) {
    if (outcome.status != ProblemStatus::accepted) continue;
    json provenance = json::array();
    for (const auto& prov : outcome.provenance) {
      provenance.push_back({{"round", prov.round}, {"sample_index", prov.sample_index}});
    }
    auto it = by_id.find(outcome.problem_id);
    json line = {{"problem_id", outcome.problem_id},
                 {"natural_language", it != by_id.end() ? it->second->statement : ""},
                 {"formal_statements", outcome.accepted_statements},
                 {"provenance", provenance}};
    out += line.dump();
    out += "\n";
  }
  return out;
}

}  // namespace autoform
