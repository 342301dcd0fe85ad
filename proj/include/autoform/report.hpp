#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autoform/pipeline.hpp"

namespace autoform {

/// Exact round-half-up of count/total as hundredths of a percent
/// (integer arithmetic, no floating-point rounding surprises).
std::int64_t percent_hundredths(std::int64_t count, std::int64_t total);

/// "93.39"-style rendering of count/total.
std::string format_percent(std::int64_t count, std::int64_t total);

struct PipelineStats {
  std::int64_t total = 0;
  std::int64_t fv_first = 0;
  std::int64_t fv_feedback = 0;
  std::int64_t cc_first = 0;
  std::int64_t cc_feedback = 0;
  std::int64_t incomplete_excluded = 0;

  std::int64_t fv_pass() const { return fv_first + fv_feedback; }
  std::int64_t cc_pass() const { return cc_first + cc_feedback; }

  std::string fv_rate() const { return format_percent(fv_pass(), total); }
  std::string fv_first_rate() const { return format_percent(fv_first, total); }
  std::string fv_feedback_rate() const { return format_percent(fv_feedback, total); }
  std::string cc_rate() const { return format_percent(cc_pass(), total); }
  std::string cc_first_rate() const { return format_percent(cc_first, total); }
  std::string cc_feedback_rate() const { return format_percent(cc_feedback, total); }

  json to_json() const;
  std::string render_table() const;
};

/// Problem-level counts from a run log. Problems with incomplete coverage
/// are excluded from every denominator and surfaced in the stats. Raises
/// EmptyLog when the log holds no attempts.
PipelineStats compute_pipeline_stats(const RunLog& log, const RunConfig& cfg);

/// Overload using the config recorded in the log header.
PipelineStats compute_pipeline_stats(const RunLog& log);

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
};

struct ClassifierMetrics {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;

  json to_json() const;
};

/// accuracy=(tp+tn)/total, precision=tp/(tp+fp), recall=tp/(tp+fn),
/// f1=2PR/(P+R); a metric with a zero denominator is reported absent.
ClassifierMetrics compute_classifier_metrics(const ConfusionCounts& c);

std::optional<double> f1_score(double precision, double recall);

/// Confusion counts from gold labels vs recorded verdicts, joined on
/// problem_id; positives are "same" verdicts.
ConfusionCounts confusion_from_labels(
    const std::vector<std::pair<std::string, bool>>& gold,
    const std::vector<std::pair<std::string, bool>>& predicted);

struct AblationRow {
  std::string name;
  std::int64_t total = 0;
  std::int64_t fv_first = 0;
  std::int64_t fv_second = 0;
  std::int64_t cc_first = 0;
  std::int64_t cc_second = 0;

  std::int64_t overall_hundredths() const {
    return percent_hundredths(cc_first + cc_second, total);
  }
  std::string overall_rate() const { return format_percent(cc_first + cc_second, total); }
};

struct AblationTable {
  std::vector<AblationRow> rows;
  json to_json() const;
  std::string render_text() const;
};

AblationRow ablation_row_from_stats(const std::string& name, const PipelineStats& stats);

/// Per-arm first/second-pass counts for both stages plus the overall rate.
/// All logs must cover the same corpus (CorpusMismatch otherwise).
AblationTable ablation_table(const std::vector<std::pair<std::string, const RunLog*>>& logs);

}  // namespace autoform
