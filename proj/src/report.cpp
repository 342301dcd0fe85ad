#include "autoform/report.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace autoform {

std::int64_t percent_hundredths(std::int64_t count, std::int64_t total) {
  if (total <= 0) return 0;
  // round-half-up of count/total*10000, in exact integer arithmetic
  return (count * 20000 + total) / (2 * total);
}

std::string format_percent(std::int64_t count, std::int64_t total) {
  std::int64_t h = percent_hundredths(count, total);
  std::string whole = std::to_string(h / 100);
  std::int64_t frac = h % 100;
  std::string frac_str = (frac < 10 ? "0" : "") + std::to_string(frac);
  return whole + "." + frac_str;
}

json PipelineStats::to_json() const {
  return {{"total", total},
          {"incomplete_excluded", incomplete_excluded},
          {"formal_verification",
           {{"count", fv_pass()},
            {"rate", fv_rate()},
            {"first_pass", {{"count", fv_first}, {"rate", fv_first_rate()}}},
            {"error_feedback", {{"count", fv_feedback}, {"rate", fv_feedback_rate()}}}}},
          {"consistency_check",
           {{"count", cc_pass()},
            {"rate", cc_rate()},
            {"first_pass", {{"count", cc_first}, {"rate", cc_first_rate()}}},
            {"error_feedback", {{"count", cc_feedback}, {"rate", cc_feedback_rate()}}}}}};
}

std::string PipelineStats::render_table() const {
  std::ostringstream out;
  auto row = [&](const std::string& label, std::int64_t count, const std::string& rate) {
    out << label;
    for (std::size_t i = label.size(); i < 34; ++i) out << ' ';
    std::string count_str = std::to_string(count);
    for (std::size_t i = count_str.size(); i < 8; ++i) out << ' ';
    out << count_str;
    std::string rate_str = rate + "%";
    for (std::size_t i = rate_str.size(); i < 10; ++i) out << ' ';
    out << rate_str << "\n";
  };
  out << "class                               number      rate\n";
  row("total", total, format_percent(total, total));
  row("formal verification", fv_pass(), fv_rate());
  row("  pass at one go", fv_first, fv_first_rate());
  row("  pass with error feedback", fv_feedback, fv_feedback_rate());
  row("consistency check", cc_pass(), cc_rate());
  row("  pass at one go", cc_first, cc_first_rate());
  row("  pass with error feedback", cc_feedback, cc_feedback_rate());
  if (incomplete_excluded > 0) {
    out << "(" << incomplete_excluded << " incomplete problem(s) excluded)\n";
  }
  return out.str();
}

namespace {

struct ProblemTally {
  bool fv_round0 = false;
  bool fv_any = false;
  bool cc_round0 = false;
  bool cc_any = false;
  std::map<int, int> attempts_per_round;
  bool incomplete_marker = false;
};

bool verification_passed(const AttemptRecord& rec) {
  return rec.verification.status == VerifyStatus::pass ||
         rec.verification.status == VerifyStatus::pass_with_sorry;
}

// a problem's event set is complete when round 0 has K attempts and every
// feedback round that should have run (no earlier acceptance) has K as well
bool tally_complete(const ProblemTally& t, const RunConfig& cfg,
                    const std::map<int, bool>& accepted_by_round) {
  if (t.incomplete_marker) return false;
  auto attempts_in = [&](int round) {
    auto it = t.attempts_per_round.find(round);
    return it == t.attempts_per_round.end() ? 0 : it->second;
  };
  if (attempts_in(0) != cfg.samples_per_problem) return false;
  bool accepted = accepted_by_round.count(0) != 0 && accepted_by_round.at(0);
  for (int round = 1; round <= cfg.feedback_rounds; ++round) {
    if (accepted) break;
    if (attempts_in(round) != cfg.samples_per_problem) return false;
    accepted = accepted_by_round.count(round) != 0 && accepted_by_round.at(round);
  }
  return true;
}

}  // namespace

PipelineStats compute_pipeline_stats(const RunLog& log, const RunConfig& cfg) {
  auto attempts = log.attempts();
  if (attempts.empty()) throw EmptyLog("run log contains no attempts");

  std::vector<std::string> order;
  std::map<std::string, ProblemTally> tallies;
  std::map<std::string, std::map<int, bool>> accepted_by_round;

  for (const AttemptRecord* rec : attempts) {
    if (tallies.find(rec->problem_id) == tallies.end()) order.push_back(rec->problem_id);
    ProblemTally& t = tallies[rec->problem_id];
    t.attempts_per_round[rec->round] += 1;
    if (verification_passed(*rec)) {
      t.fv_any = true;
      if (rec->round == 0) t.fv_round0 = true;
    }
    if (rec->outcome == AttemptOutcome::accepted) {
      t.cc_any = true;
      if (rec->round == 0) t.cc_round0 = true;
      accepted_by_round[rec->problem_id][rec->round] = true;
    }
  }
  for (const IncompleteEvent* inc : log.incompletes()) {
    tallies[inc->problem_id].incomplete_marker = true;
  }

  PipelineStats stats;
  for (const std::string& id : order) {
    const ProblemTally& t = tallies[id];
    if (!tally_complete(t, cfg, accepted_by_round[id])) {
      ++stats.incomplete_excluded;
      continue;
    }
    ++stats.total;
    if (t.fv_round0) {
      ++stats.fv_first;
    } else if (t.fv_any) {
      ++stats.fv_feedback;
    }
    if (t.cc_round0) {
      ++stats.cc_first;
    } else if (t.cc_any) {
      ++stats.cc_feedback;
    }
  }
  if (stats.total == 0) throw EmptyLog("every problem in the log is incomplete");
  return stats;
}

PipelineStats compute_pipeline_stats(const RunLog& log) {
  return compute_pipeline_stats(log, RunConfig::from_json(log.header.config));
}

json ClassifierMetrics::to_json() const {
  auto field = [](const std::optional<double>& v) {
    return v.has_value() ? json(*v) : json(nullptr);
  };
  return {{"accuracy", field(accuracy)},
          {"precision", field(precision)},
          {"recall", field(recall)},
          {"f1", field(f1)}};
}

ClassifierMetrics compute_classifier_metrics(const ConfusionCounts& c) {
  ClassifierMetrics m;
  std::int64_t total = c.tp + c.fp + c.fn + c.tn;
  if (total > 0) {
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
  }
  if (c.tp + c.fp > 0) {
    m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn > 0) {
    m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  }
  if (m.precision.has_value() && m.recall.has_value()) {
    m.f1 = f1_score(*m.precision, *m.recall);
  }
  return m;
}

std::optional<double> f1_score(double precision, double recall) {
  if (precision + recall <= 0.0) return std::nullopt;
  return 2.0 * precision * recall / (precision + recall);
}

ConfusionCounts confusion_from_labels(
    const std::vector<std::pair<std::string, bool>>& gold,
    const std::vector<std::pair<std::string, bool>>& predicted) {
  std::map<std::string, bool> pred;
  for (const auto& [id, same] : predicted) pred[id] = same;

  ConfusionCounts c;
  for (const auto& [id, gold_same] : gold) {
    auto it = pred.find(id);
    if (it == pred.end()) continue;
    bool predicted_same = it->second;
    if (predicted_same && gold_same) ++c.tp;
    if (predicted_same && !gold_same) ++c.fp;
    if (!predicted_same && gold_same) ++c.fn;
    if (!predicted_same && !gold_same) ++c.tn;
  }
  return c;
}

json AblationTable::to_json() const {
  json arms = json::array();
  for (const AblationRow& row : rows) {
    arms.push_back({{"name", row.name},
                    {"total", row.total},
                    {"fv_first_pass", row.fv_first},
                    {"fv_second_pass", row.fv_second},
                    {"cc_first_pass", row.cc_first},
                    {"cc_second_pass", row.cc_second},
                    {"overall_rate", row.overall_rate()}});
  }
  return {{"arms", arms}};
}

std::string AblationTable::render_text() const {
  std::ostringstream out;
  out << "class                 fv first  fv second  cc first  cc second  pass rate\n";
  for (const AblationRow& row : rows) {
    out << row.name;
    for (std::size_t i = row.name.size(); i < 20; ++i) out << ' ';
    auto cell = [&](std::int64_t v, int width) {
      std::string s = std::to_string(v);
      for (std::size_t i = s.size(); i < static_cast<std::size_t>(width); ++i) out << ' ';
      out << s;
    };
    cell(row.fv_first, 10);
    cell(row.fv_second, 11);
    cell(row.cc_first, 10);
    cell(row.cc_second, 11);
    std::string rate = row.overall_rate() + "%";
    for (std::size_t i = rate.size(); i < 11; ++i) out << ' ';
    out << rate << "\n";
  }
  return out.str();
}

AblationRow ablation_row_from_stats(const std::string& name, const PipelineStats& stats) {
  AblationRow row;
  row.name = name;
  row.total = stats.total;
  row.fv_first = stats.fv_first;
  row.fv_second = stats.fv_feedback;
  row.cc_first = stats.cc_first;
  row.cc_second = stats.cc_feedback;
  return row;
}

AblationTable ablation_table(const std::vector<std::pair<std::string, const RunLog*>>& logs) {
  AblationTable table;
  std::string corpus;
  for (const auto& [name, log] : logs) {
    if (corpus.empty()) {
      corpus = log->header.corpus_hash;
    } else if (log->header.corpus_hash != corpus) {
      throw CorpusMismatch("ablation arms cover different corpora");
    }
    table.rows.push_back(ablation_row_from_stats(name, compute_pipeline_stats(*log)));
  }
  return table;
}

}  // namespace autoform
