#include "autoform/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "autoform/bench.hpp"
#include "autoform/clock.hpp"
#include "autoform/corpus.hpp"
#include "autoform/gateway.hpp"
#include "autoform/jsonl.hpp"
#include "autoform/pipeline.hpp"
#include "autoform/prompts.hpp"
#include "autoform/rating.hpp"
#include "autoform/report.hpp"
#include "autoform/verify.hpp"

namespace autoform {
namespace {

namespace fs = std::filesystem;

struct AppConfig {
  json raw = json::object();

  GatewayConfig gateway() const {
    return raw.is_object() ? GatewayConfig::from_json(raw) : GatewayConfig::offline_defaults();
  }

  RunConfig pipeline() const {
    RunConfig cfg;
    if (raw.contains("pipeline")) cfg = RunConfig::from_json(raw["pipeline"]);
    return cfg;
  }

  ReplConfig lean() const {
    ReplConfig cfg;
    if (raw.contains("lean")) {
      const json& l = raw["lean"];
      cfg.launch_command = l.value("command", cfg.launch_command);
      cfg.working_dir = l.value("working_dir", cfg.working_dir);
      cfg.startup_timeout_s = l.value("startup_timeout_s", cfg.startup_timeout_s);
      cfg.check_timeout_s = l.value("check_timeout_s", cfg.check_timeout_s);
      cfg.header = l.value("header", cfg.header);
    }
    return cfg;
  }

  int lean_pool_size() const {
    return raw.contains("lean") ? raw["lean"].value("pool_size", 1) : 1;
  }

  int lean_max_checks() const {
    return raw.contains("lean") ? raw["lean"].value("max_checks_per_session", 100) : 100;
  }

  std::vector<FewShotExemplar> exemplars() const {
    if (!raw.contains("exemplars")) return default_exemplars();
    std::vector<FewShotExemplar> out;
    for (const json& e : raw["exemplars"]) {
      FewShotExemplar ex;
      ex.nl_statement = e.at("natural_language").get<std::string>();
      ex.lean_statement = e.at("lean").get<std::string>();
      std::string topic = e.value("topic", "algebra");
      ex.topic = topic == "number_theory" ? ExemplarTopic::number_theory
                                          : ExemplarTopic::algebra;
      out.push_back(std::move(ex));
    }
    return out;
  }

  PromptSet prompts() const {
    if (raw.contains("prompts_dir")) {
      return PromptSet::from_dir(raw["prompts_dir"].get<std::string>());
    }
    return PromptSet::builtin();
  }
};

AppConfig load_config(const std::string& path) {
  AppConfig cfg;
  if (path.empty()) return cfg;
  json parsed = json::parse(read_file(path), nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) {
    throw Error("config file is not a JSON object: " + path);
  }
  cfg.raw = parsed;
  return cfg;
}

std::shared_ptr<Backend> make_backend(const std::string& mock_llm_path) {
  if (!mock_llm_path.empty()) {
    return ScriptedBackend::from_file(mock_llm_path);
  }
  return std::make_shared<HttpBackend>();
}

std::shared_ptr<Verifier> make_verifier(const std::string& stub_path, ReplConfig lean_cfg,
                                        int pool_size, int max_checks) {
  if (!stub_path.empty()) {
    return StubVerifier::from_file(stub_path);
  }
  if (lean_cfg.launch_command.empty()) {
    throw Error("no verifier configured: pass --stub-verifier or --lean-cmd "
                "(or set lean.command in the config file)");
  }
  return std::make_shared<ReplVerifier>(std::move(lean_cfg), pool_size, max_checks);
}

std::vector<Problem> load_problems(const std::string& path) {
  return problems_from_jsonl(read_file(path));
}

// ---------------------------------------------------------------------------
// ingest

int cmd_ingest(const std::string& in, const std::string& out, const std::string& pattern,
               std::string source_id, std::ostream& err) {
  std::vector<Problem> problems;
  fs::path input(in);

  auto ingest_markdown = [&](const fs::path& file) {
    RawDocument doc;
    doc.source_id = source_id.empty() ? file.stem().string() : source_id;
    doc.body = read_file(file.string());
    auto extracted = extract_problems(doc, pattern);
    problems.insert(problems.end(), extracted.begin(), extracted.end());
  };

  if (fs::is_directory(input)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(input)) {
      if (entry.is_regular_file() && entry.path().extension() == ".md") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    std::string forced = source_id;
    for (const auto& file : files) {
      source_id = forced;  // per-file stem unless forced
      ingest_markdown(file);
    }
  } else if (input.extension() == ".jsonl") {
    for (const json& line : read_jsonl_file(in)) {
      Problem p;
      p.id = line.at("id").get<std::string>();
      p.source_id = line.value("source_id", "");
      p.statement = line.at("statement").get<std::string>();
      p.category = category_from_name(line.value("category", "unknown"))
                       .value_or(Category::unknown);
      problems.push_back(std::move(p));
    }
  } else {
    ingest_markdown(input);
  }

  write_file(out, problems_to_jsonl(problems));
  err << "ingested " << problems.size() << " problem(s) -> " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// preprocess

int cmd_preprocess(const std::string& in, const std::string& out,
                   const std::string& report_path, const AppConfig& cfg,
                   const std::string& mock_llm, std::ostream& err) {
  std::vector<Problem> problems = load_problems(in);
  Gateway gateway(cfg.gateway(), make_backend(mock_llm));
  PreprocessResult result = preprocess_corpus(problems, gateway);

  write_file(out, problems_to_jsonl(result.kept));

  if (!report_path.empty()) {
    json dropped = json::array();
    for (const Problem& p : result.dropped) {
      dropped.push_back({{"id", p.id}, {"category", category_name(p.category)}});
    }
    json report = {{"total_in", result.report.total_in},
                   {"geometry_dropped", result.report.geometry_dropped},
                   {"split_parents", result.report.split_parents},
                   {"total_out", result.report.total_out},
                   {"dropped", dropped},
                   {"review_flagged", result.review_flagged}};
    write_file(report_path, report.dump(2) + "\n");
  }

  err << "kept " << result.kept.size() << " of " << problems.size() << " problem(s)";
  if (result.report.geometry_dropped > 0) {
    err << ", dropped " << result.report.geometry_dropped << " geometry";
  }
  err << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// formalize

void write_manifest(const std::string& path, const RunConfig& cfg,
                    const std::string& corpus_digest, const std::string& in,
                    bool resumed, std::optional<std::int64_t> finished_at) {
  json manifest = {{"config", cfg.semantic_json()},
                   {"config_hash", cfg.config_hash()},
                   {"corpus_hash", corpus_digest},
                   {"input", in},
                   {"resumed", resumed},
                   {"version", "0.1.0"},
                   {"started_at_ms", wall_time_ms()}};
  if (finished_at.has_value()) manifest["finished_at_ms"] = *finished_at;
  write_file(path, manifest.dump(2) + "\n");
}

int cmd_formalize(const std::string& in, const std::string& out, const std::string& log_path,
                  const AppConfig& app, RunConfig run_cfg, const std::string& mock_llm,
                  const std::string& stub_verifier, const ReplConfig& lean_override,
                  bool resume, std::ostream& err) {
  std::vector<Problem> problems = load_problems(in);

  ReplConfig lean_cfg = app.lean();
  if (!lean_override.launch_command.empty()) lean_cfg.launch_command = lean_override.launch_command;
  if (lean_override.working_dir != ".") lean_cfg.working_dir = lean_override.working_dir;
  if (lean_override.check_timeout_s > 0) lean_cfg.check_timeout_s = lean_override.check_timeout_s;

  Gateway gateway(app.gateway(), make_backend(mock_llm));
  std::shared_ptr<Verifier> verifier =
      make_verifier(stub_verifier, lean_cfg, app.lean_pool_size(), app.lean_max_checks());
  PromptSet prompts = app.prompts();
  std::vector<FewShotExemplar> exemplars = app.exemplars();
  PipelineServices services{gateway, *verifier, prompts, exemplars};

  std::string manifest_path = (log_path.empty() ? out : log_path) + ".manifest.json";
  write_manifest(manifest_path, run_cfg, corpus_hash(problems), in, resume, std::nullopt);

  RunLog log;
  if (resume) {
    RunLog prior = RunLog::read_file(log_path);
    std::string tmp = log_path + ".tmp";
    log = resume_run(prior, problems, run_cfg, services, tmp);
    fs::rename(tmp, log_path);
  } else {
    log = run_corpus(problems, run_cfg, services, log_path);
  }

  std::vector<ProblemOutcome> outcomes = replay_outcomes(log);
  if (!out.empty()) {
    write_file(out, dataset_jsonl(problems, outcomes));
  }
  write_manifest(manifest_path, run_cfg, corpus_hash(problems), in, resume, wall_time_ms());

  std::int64_t accepted = 0;
  std::int64_t incomplete = 0;
  for (const auto& o : outcomes) {
    if (o.status == ProblemStatus::accepted) ++accepted;
    if (o.status == ProblemStatus::incomplete) ++incomplete;
  }
  err << "formalized " << accepted << " of " << problems.size() << " problem(s)";
  if (incomplete > 0) err << " (" << incomplete << " incomplete)";
  err << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// rate

int cmd_rate(const std::string& in, const std::string& out, const std::string& dist_path,
             const AppConfig& app, const std::string& mock_llm, bool per_problem,
             std::ostream& console, std::ostream& err) {
  Gateway gateway(app.gateway(), make_backend(mock_llm));
  PromptSet prompts = app.prompts();

  std::vector<RatedEntry> entries;
  for (const json& line : read_jsonl_file(in)) {
    std::string problem_id = line.value("problem_id", line.value("id", ""));
    std::vector<std::string> statements;
    if (line.contains("formal_statements")) {
      for (const auto& s : line["formal_statements"]) statements.push_back(s.get<std::string>());
    } else if (line.contains("lean")) {
      statements.push_back(line["lean"].get<std::string>());
    }
    if (per_problem && statements.size() > 1) statements.resize(1);
    for (std::size_t i = 0; i < statements.size(); ++i) {
      RatedEntry entry;
      entry.problem_id = problem_id;
      entry.statement_ordinal = static_cast<int>(i + 1);
      entry.assessment = rate_statement(statements[i], gateway, prompts);
      entries.push_back(std::move(entry));
    }
  }

  std::string serialized;
  for (const RatedEntry& entry : entries) {
    serialized += entry.to_json().dump();
    serialized += "\n";
  }
  write_file(out, serialized);

  RatingDistribution dist = rating_distribution(entries);
  if (!dist_path.empty()) write_file(dist_path, dist.to_json().dump(2) + "\n");
  console << dist.render_text();
  err << "rated " << dist.rated << " statement(s), " << dist.unrated << " unrated\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench

int cmd_bench(const std::string& in, const std::string& out, BenchConfig bench_cfg,
              const AppConfig& app, const std::string& prover_config_path,
              const std::string& mock_llm, const std::string& stub_verifier,
              const ReplConfig& lean_override, std::ostream& err) {
  std::vector<BenchStatement> statements;
  for (const json& line : read_jsonl_file(in)) {
    std::string problem_id = line.value("problem_id", line.value("id", ""));
    if (line.contains("formal_statements")) {
      int ordinal = 0;
      for (const auto& s : line["formal_statements"]) {
        ++ordinal;
        statements.push_back({problem_id + "#" + std::to_string(ordinal),
                              s.get<std::string>()});
      }
    } else if (line.contains("lean")) {
      statements.push_back({problem_id, line["lean"].get<std::string>()});
    } else if (line.contains("statement")) {
      statements.push_back({problem_id, line["statement"].get<std::string>()});
    }
  }

  AppConfig prover_app = app;
  if (!prover_config_path.empty()) prover_app = load_config(prover_config_path);
  Gateway prover(prover_app.gateway(), make_backend(mock_llm));

  ReplConfig lean_cfg = app.lean();
  if (!lean_override.launch_command.empty()) lean_cfg.launch_command = lean_override.launch_command;
  std::shared_ptr<Verifier> verifier =
      make_verifier(stub_verifier, lean_cfg, app.lean_pool_size(), app.lean_max_checks());

  ProverBenchResult result = run_benchmark(statements, bench_cfg, prover, *verifier);
  write_file(out, result.to_json().dump(2) + "\n");

  std::int64_t solved = std::count_if(result.problems.begin(), result.problems.end(),
                                      [](const auto& p) { return p.solved; });
  err << "solved " << solved << " of " << result.problems.size() << " (pass rate "
      << format_percent(solved, static_cast<std::int64_t>(result.problems.size()))
      << "%)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report

std::vector<std::pair<std::string, bool>> load_labels(const std::string& path) {
  std::string text = read_file(path);
  std::vector<json> lines = parse_jsonl(text);
  if (!lines.empty() && lines[0].value("kind", "") == "header") {
    // a run log: the recorded verdict for a problem is "any attempt judged same"
    RunLog log = RunLog::parse(text);
    std::vector<std::string> order;
    std::map<std::string, bool> same;
    for (const AttemptRecord* rec : log.attempts()) {
      if (same.find(rec->problem_id) == same.end()) order.push_back(rec->problem_id);
      bool& value = same[rec->problem_id];
      if (rec->verdict.has_value() && rec->verdict->same) value = true;
    }
    std::vector<std::pair<std::string, bool>> out;
    for (const auto& id : order) out.emplace_back(id, same[id]);
    return out;
  }
  std::vector<std::pair<std::string, bool>> out;
  for (const json& line : lines) {
    std::string id = line.value("problem_id", line.value("id", ""));
    if (!line.contains("same")) throw Error("label record missing \"same\": " + id);
    out.emplace_back(id, line["same"].get<bool>());
  }
  return out;
}

int cmd_report_stats(const std::string& log_path, const std::string& out, bool table,
                     std::ostream& console) {
  RunLog log = RunLog::read_file(log_path);
  PipelineStats stats = compute_pipeline_stats(log);
  if (!out.empty()) write_file(out, stats.to_json().dump(2) + "\n");
  if (table || out.empty()) console << stats.render_table();
  return 0;
}

int cmd_report_metrics(const std::string& gold_path, const std::string& pred_path,
                       const std::string& out, std::ostream& console) {
  ConfusionCounts counts =
      confusion_from_labels(load_labels(gold_path), load_labels(pred_path));
  ClassifierMetrics metrics = compute_classifier_metrics(counts);
  json payload = metrics.to_json();
  payload["counts"] = {{"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn},
                       {"tn", counts.tn}};
  if (!out.empty()) {
    write_file(out, payload.dump(2) + "\n");
  } else {
    console << payload.dump(2) << "\n";
  }
  return 0;
}

int cmd_report_ablation(const std::vector<std::string>& arm_specs, const std::string& out,
                        bool table, std::ostream& console) {
  std::vector<RunLog> logs;
  std::vector<std::pair<std::string, const RunLog*>> named;
  logs.reserve(arm_specs.size());
  for (const std::string& spec : arm_specs) {
    std::size_t eq = spec.find('=');
    if (eq == std::string::npos) throw Error("ablation arm must be name=logpath: " + spec);
    logs.push_back(RunLog::read_file(spec.substr(eq + 1)));
  }
  for (std::size_t i = 0; i < arm_specs.size(); ++i) {
    named.emplace_back(arm_specs[i].substr(0, arm_specs[i].find('=')), &logs[i]);
  }
  AblationTable result = ablation_table(named);
  if (!out.empty()) write_file(out, result.to_json().dump(2) + "\n");
  if (table || out.empty()) console << result.render_text();
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"autoformalization pipeline for competition math problems"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON configuration file")->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "extract problems from markdown or JSONL");
  std::string ingest_in, ingest_out, ingest_source;
  std::string ingest_pattern = kDefaultNumberingPattern;
  ingest->add_option("--in", ingest_in, "input file or directory")->required();
  ingest->add_option("--out", ingest_out, "output problems JSONL")->required();
  ingest->add_option("--pattern", ingest_pattern, "problem header pattern");
  ingest->add_option("--source-id", ingest_source, "override the source id");

  // preprocess
  auto* preprocess = app.add_subcommand("preprocess", "geometry filtering and subgoal splitting");
  std::string pre_in, pre_out, pre_report, pre_mock;
  preprocess->add_option("--in", pre_in, "problems JSONL")->required();
  preprocess->add_option("--out", pre_out, "kept problems JSONL")->required();
  preprocess->add_option("--report", pre_report, "preprocessing report JSON");
  preprocess->add_option("--mock-llm", pre_mock, "scripted backend file");

  // formalize
  auto* formalize = app.add_subcommand("formalize", "run the autoformalization pipeline");
  std::string fm_in, fm_out, fm_log, fm_mock, fm_stub, fm_lean_cmd, fm_lean_dir;
  int fm_samples = -1, fm_rounds = -1, fm_concurrency = -1;
  double fm_temperature = -1.0, fm_timeout = -1.0;
  std::int64_t fm_seed = 0;
  bool fm_resume = false;
  bool fm_few_shot = true;
  formalize->add_option("--in", fm_in, "preprocessed problems JSONL")->required();
  formalize->add_option("--out", fm_out, "dataset JSONL");
  formalize->add_option("--log", fm_log, "run log JSONL")->required();
  formalize->add_option("--samples", fm_samples, "samples per problem");
  formalize->add_option("--feedback-rounds", fm_rounds, "error feedback rounds");
  auto* fm_fs = formalize->add_flag("--few-shot,!--no-few-shot", fm_few_shot,
                                    "include exemplars in round-0 prompts");
  formalize->add_option("--temperature", fm_temperature, "translator temperature");
  formalize->add_option("--concurrency", fm_concurrency, "worker count");
  auto* fm_seed_opt = formalize->add_option("--seed", fm_seed, "sampling seed");
  formalize->add_flag("--resume", fm_resume, "resume from the existing log");
  formalize->add_option("--mock-llm", fm_mock, "scripted backend file");
  formalize->add_option("--stub-verifier", fm_stub, "stub verifier file");
  formalize->add_option("--lean-cmd", fm_lean_cmd, "REPL launch command");
  formalize->add_option("--lean-dir", fm_lean_dir, "REPL working directory");
  formalize->add_option("--timeout", fm_timeout, "per-statement check timeout (s)");

  // rate
  auto* rate = app.add_subcommand("rate", "quality-rate formal statements");
  std::string rate_in, rate_out, rate_dist, rate_mock;
  bool rate_per_problem = false;
  rate->add_option("--in", rate_in, "dataset JSONL")->required();
  rate->add_option("--out", rate_out, "ratings JSONL")->required();
  rate->add_option("--dist", rate_dist, "distribution JSON");
  rate->add_option("--mock-llm", rate_mock, "scripted backend file");
  rate->add_flag("--per-problem", rate_per_problem, "rate only the first statement per problem");

  // bench
  auto* bench = app.add_subcommand("bench", "benchmark a prover on formal statements");
  std::string bench_in, bench_out, bench_prover_cfg, bench_mock, bench_stub, bench_lean_cmd;
  BenchConfig bench_cfg;
  bench->add_option("--in", bench_in, "dataset JSONL")->required();
  bench->add_option("--out", bench_out, "benchmark result JSON")->required();
  bench->add_option("--sample", bench_cfg.sample_size, "problems to sample");
  bench->add_option("--attempts", bench_cfg.attempts_per_problem, "attempts per problem");
  bench->add_option("--seed", bench_cfg.seed, "sampling seed");
  bench->add_option("--prover-config", bench_prover_cfg, "prover endpoint config");
  bench->add_option("--mock-llm", bench_mock, "scripted prover file");
  bench->add_option("--stub-verifier", bench_stub, "stub verifier file");
  bench->add_option("--lean-cmd", bench_lean_cmd, "REPL launch command");

  // report
  auto* report = app.add_subcommand("report", "aggregate run logs into tables");
  std::string rep_log, rep_out;
  bool rep_table = false;
  report->add_option("--log", rep_log, "run log JSONL");
  report->add_option("--out", rep_out, "stats JSON");
  report->add_flag("--table", rep_table, "print an aligned text table");

  auto* metrics = report->add_subcommand("metrics", "consistency-check classifier metrics");
  std::string met_gold, met_pred, met_out;
  metrics->add_option("--gold", met_gold, "gold labels JSONL")->required();
  metrics->add_option("--pred", met_pred, "predicted verdicts JSONL or run log")->required();
  metrics->add_option("--out", met_out, "metrics JSON");

  auto* ablation = report->add_subcommand("ablation", "compare runs arm by arm");
  std::vector<std::string> abl_arms;
  std::string abl_out;
  bool abl_table = false;
  ablation->add_option("--arm", abl_arms, "name=logpath (repeatable)")->required();
  ablation->add_option("--out", abl_out, "table JSON");
  ablation->add_flag("--table", abl_table, "print an aligned text table");

  std::vector<std::string> argv_vec = args;
  std::reverse(argv_vec.begin(), argv_vec.end());  // CLI11 parses reversed vectors

  try {
    app.parse(argv_vec);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    AppConfig app_cfg = load_config(config_path);

    if (*ingest) {
      return cmd_ingest(ingest_in, ingest_out, ingest_pattern, ingest_source, err);
    }
    if (*preprocess) {
      return cmd_preprocess(pre_in, pre_out, pre_report, app_cfg, pre_mock, err);
    }
    if (*formalize) {
      RunConfig run_cfg = app_cfg.pipeline();
      if (fm_samples > 0) run_cfg.samples_per_problem = fm_samples;
      if (fm_rounds >= 0) run_cfg.feedback_rounds = fm_rounds;
      if (fm_fs->count() > 0) run_cfg.few_shot = fm_few_shot;
      if (fm_temperature >= 0) run_cfg.translator_temperature = fm_temperature;
      if (fm_concurrency > 0) run_cfg.concurrency = fm_concurrency;
      if (fm_seed_opt->count() > 0) run_cfg.seed = fm_seed;
      ReplConfig lean_override;
      lean_override.launch_command = fm_lean_cmd;
      if (!fm_lean_dir.empty()) lean_override.working_dir = fm_lean_dir;
      lean_override.check_timeout_s = fm_timeout;
      return cmd_formalize(fm_in, fm_out, fm_log, app_cfg, run_cfg, fm_mock, fm_stub,
                           lean_override, fm_resume, err);
    }
    if (*rate) {
      return cmd_rate(rate_in, rate_out, rate_dist, app_cfg, rate_mock, rate_per_problem,
                      out, err);
    }
    if (*bench) {
      ReplConfig lean_override;
      lean_override.launch_command = bench_lean_cmd;
      return cmd_bench(bench_in, bench_out, bench_cfg, app_cfg, bench_prover_cfg,
                       bench_mock, bench_stub, lean_override, err);
    }
    if (*report) {
      if (*metrics) {
        return cmd_report_metrics(met_gold, met_pred, met_out, out);
      }
      if (*ablation) {
        return cmd_report_ablation(abl_arms, abl_out, abl_table, out);
      }
      if (rep_log.empty()) {
        err << "error: report needs --log (or a subcommand)\n";
        return 2;
      }
      return cmd_report_stats(rep_log, rep_out, rep_table, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace autoform
