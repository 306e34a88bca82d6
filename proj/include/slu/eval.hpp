#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slu {

/// Span-level slot scores in [0, 1].
struct SpanScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long gold = 0;
  long predicted = 0;
  long correct = 0;
};

/// A predicted span is correct iff start, end and type all match a gold span.
/// P = correct / predicted (0 when nothing is predicted), R = correct / gold,
/// F1 = 2PR / (P + R) or 0.
SpanScores conll_f1(const std::vector<std::vector<std::string>>& predicted,
                    const std::vector<std::vector<std::string>>& gold);

double intent_accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& gold);

struct EvalReport {
  SpanScores slots;
  double intent_accuracy = 0.0;
  double token_accuracy = 0.0;  // per-token tag accuracy
  long utterances = 0;
};

/// Per-run reports and their arithmetic mean (metrics only; counts are summed).
struct AggregateReport {
  std::vector<EvalReport> runs;
  EvalReport mean;
};

AggregateReport aggregate(const std::vector<EvalReport>& runs);

// Percentages with one decimal, e.g. "95.6".
std::string percent(double fraction);

/// Human-readable table: one row per labelled report plus P/R/F1/Acc columns.
void write_report_table(std::ostream& out, const std::vector<std::pair<std::string, EvalReport>>& rows);

/// One "key=value" record per line: slot_precision, slot_recall, slot_f1,
/// intent_accuracy, token_accuracy, gold_spans, predicted_spans, correct_spans, utterances.
void write_report_records(std::ostream& out, const EvalReport& report, const std::string& prefix = "");

/// Reads the records with the given prefix back; other lines are ignored.
/// Throws FormatError when a key is missing or malformed.
EvalReport read_report_records(std::istream& in, const std::string& source_name, const std::string& prefix = "");

}  // namespace slu
