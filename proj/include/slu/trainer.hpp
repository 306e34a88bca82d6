#pragma once

#include "slu/config.hpp"
#include "slu/corpus.hpp"
#include "slu/eval.hpp"
#include "slu/model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace slu {

// Raised when training cannot continue, e.g. a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// L = alpha_intent * intent_loss + alpha_slot * slot_loss. Both inputs are
/// already batch means (per utterance and per token respectively).
double joint_loss(double intent_loss, double slot_loss, const TrainConfig& config);

template <typename S>
Var<S> joint_loss(Var<S> intent_loss, Var<S> slot_loss, const TrainConfig& config);

struct BatchLoss {
  double intent = 0.0;  // 0 when the mode skips the intent head
  double slot = 0.0;
  double total = 0.0;
};

/// Builds the training loss of one batch on `graph`. The mode decides which
/// heads run; a head that does not run contributes nothing and its
/// parameters never enter the graph.
template <typename S>
Var<S> batch_loss(SluModel<S>& model, Graph<S>& graph, const LabeledBatch& batch, const TrainConfig& config,
                  bool train, Rng* rng, BatchLoss* parts = nullptr);

struct EpochRecord {
  int epoch = 0;
  std::uint64_t seed = 0;
  BatchLoss loss;  // means over the epoch's batches
  EvalReport dev;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
};

/// Dev score used for model selection. kAuto means slot F1 + intent accuracy
/// in joint mode and the trained task's metric otherwise.
double selection_score(const EvalReport& dev, SelectMetric metric, TrainMode mode);

/// Index of the best epoch; ties go to the earliest.
int select_best(const TrainHistory& history, SelectMetric metric, TrainMode mode);

struct TrainOptions {
  // Called after each epoch; returning false stops training.
  std::function<bool(const EpochRecord&)> on_epoch;
  // Receives one JSON object per epoch (see write_metrics_record).
  std::ostream* metrics_log = nullptr;
};

/// Mini-batch Adam training with per-epoch dev evaluation and early stopping
/// after `patience` epochs without improvement. On return the model holds
/// the parameters of the best dev epoch.
///
/// `seed` drives shuffling and dropout; model initialisation is the model's
/// own seed.
template <typename S>
TrainHistory train(SluModel<S>& model, const std::vector<Utterance>& train_set, const std::vector<Utterance>& dev_set,
                   const TrainConfig& config, std::uint64_t seed, const TrainOptions& options = {});

/// One line: {"epoch":..,"seed":..,"loss":..,"intent_loss":..,"slot_loss":..,
/// "dev_slot_precision":..,"dev_slot_recall":..,"dev_slot_f1":..,
/// "dev_intent_accuracy":..,"dev_token_accuracy":..}. Wall time is left out
/// so that logs of identical runs are identical.
void write_metrics_record(std::ostream& out, const EpochRecord& record);

/// Parses a log written by write_metrics_record (one record per line).
std::vector<EpochRecord> read_metrics_log(std::istream& in, const std::string& source_name);

}  // namespace slu
