#include "slu/eval.hpp"

#include "slu/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>

namespace slu {

SpanScores conll_f1(const std::vector<std::vector<std::string>>& predicted,
                    const std::vector<std::vector<std::string>>& gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("conll_f1: " + std::to_string(predicted.size()) + " predicted vs " +
                                std::to_string(gold.size()) + " gold utterances");
  }
  SpanScores s;
  for (std::size_t u = 0; u < gold.size(); ++u) {
    if (predicted[u].size() != gold[u].size()) {
      throw std::invalid_argument("conll_f1: utterance " + std::to_string(u) + " has " +
                                  std::to_string(predicted[u].size()) + " predicted vs " +
                                  std::to_string(gold[u].size()) + " gold tags");
    }
    const auto p = bio_spans(predicted[u]);
    const auto g = bio_spans(gold[u]);
    s.predicted += static_cast<long>(p.size());
    s.gold += static_cast<long>(g.size());
    // both lists are sorted by start and disjoint
    std::size_t i = 0, j = 0;
    while (i < p.size() && j < g.size()) {
      if (p[i] == g[j]) {
        ++s.correct;
        ++i;
        ++j;
      } else if (p[i] < g[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }
  s.precision = s.predicted > 0 ? static_cast<double>(s.correct) / static_cast<double>(s.predicted) : 0.0;
  s.recall = s.gold > 0 ? static_cast<double>(s.correct) / static_cast<double>(s.gold) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double intent_accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& gold) {
  if (predicted.size() != gold.size()) throw std::invalid_argument("intent_accuracy: length mismatch");
  if (gold.empty()) throw std::invalid_argument("intent_accuracy: no utterances");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predicted[i] == gold[i];
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

AggregateReport aggregate(const std::vector<EvalReport>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate: no runs");
  AggregateReport agg;
  agg.runs = runs;
  const double n = static_cast<double>(runs.size());
  for (const auto& r : runs) {
    agg.mean.slots.precision += r.slots.precision / n;
    agg.mean.slots.recall += r.slots.recall / n;
    agg.mean.slots.f1 += r.slots.f1 / n;
    agg.mean.intent_accuracy += r.intent_accuracy / n;
    agg.mean.token_accuracy += r.token_accuracy / n;
    agg.mean.slots.gold += r.slots.gold;
    agg.mean.slots.predicted += r.slots.predicted;
    agg.mean.slots.correct += r.slots.correct;
    agg.mean.utterances += r.utterances;
  }
  return agg;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}

void write_report_table(std::ostream& out, const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t width = 5;
  for (const auto& [label, _] : rows) width = std::max(width, label.size());
  out << std::left << std::setw(static_cast<int>(width)) << "Model" << " | " << std::right << std::setw(5) << "P"
      << ' ' << std::setw(5) << "R" << ' ' << std::setw(5) << "F1" << " | " << std::setw(5) << "Acc" << '\n';
  out << std::string(width, '-') << "-+-" << std::string(17, '-') << "-+-" << std::string(5, '-') << '\n';
  for (const auto& [label, r] : rows) {
    out << std::left << std::setw(static_cast<int>(width)) << label << " | " << std::right << std::setw(5)
        << percent(r.slots.precision) << ' ' << std::setw(5) << percent(r.slots.recall) << ' ' << std::setw(5)
        << percent(r.slots.f1) << " | " << std::setw(5) << percent(r.intent_accuracy) << '\n';
  }
}

void write_report_records(std::ostream& out, const EvalReport& r, const std::string& prefix) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  out << prefix << "slot_precision=" << num(r.slots.precision) << '\n'
      << prefix << "slot_recall=" << num(r.slots.recall) << '\n'
      << prefix << "slot_f1=" << num(r.slots.f1) << '\n'
      << prefix << "intent_accuracy=" << num(r.intent_accuracy) << '\n'
      << prefix << "token_accuracy=" << num(r.token_accuracy) << '\n'
      << prefix << "gold_spans=" << r.slots.gold << '\n'
      << prefix << "predicted_spans=" << r.slots.predicted << '\n'
      << prefix << "correct_spans=" << r.slots.correct << '\n'
      << prefix << "utterances=" << r.utterances << '\n';
}

EvalReport read_report_records(std::istream& in, const std::string& source_name, const std::string& prefix) {
  std::map<std::string, std::string> values;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.compare(0, prefix.size(), prefix) != 0) continue;
    values[line.substr(prefix.size(), eq - prefix.size())] = line.substr(eq + 1);
  }
  auto number = [&](const char* key) {
    const auto it = values.find(key);
    if (it == values.end()) throw FormatError(source_name, 0, "missing record " + prefix + key);
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw FormatError(source_name, 0, "malformed value for " + prefix + key + ": '" + it->second + "'");
    }
  };
  EvalReport r;
  r.slots.precision = number("slot_precision");
  r.slots.recall = number("slot_recall");
  r.slots.f1 = number("slot_f1");
  r.intent_accuracy = number("intent_accuracy");
  r.token_accuracy = number("token_accuracy");
  r.slots.gold = static_cast<long>(number("gold_spans"));
  r.slots.predicted = static_cast<long>(number("predicted_spans"));
  r.slots.correct = static_cast<long>(number("correct_spans"));
  r.utterances = static_cast<long>(number("utterances"));
  return r;
}

}  // namespace slu
