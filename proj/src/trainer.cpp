#include "slu/trainer.hpp"

#include "slu/config_json.hpp"
#include "slu/optim.hpp"

#include <chrono>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

namespace slu {

namespace {

void require_loss(double value, const char* what) {
  if (!std::isfinite(value) || value < 0.0) {
    throw std::invalid_argument(std::string("joint_loss: ") + what + " must be finite and >= 0, got " +
                                std::to_string(value));
  }
}

HeadSet heads_for(TrainMode mode) {
  switch (mode) {
    case TrainMode::kIntentOnly:
      return {true, false};
    case TrainMode::kSlotOnly:
      return {false, true};
    case TrainMode::kJoint:
      break;
  }
  return {true, true};
}

template <typename S>
std::vector<Matrix<S>> snapshot(const ParameterStore<S>& store) {
  std::vector<Matrix<S>> out;
  out.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) out.push_back(store.tensor(i).value);
  return out;
}

template <typename S>
void restore(ParameterStore<S>& store, const std::vector<Matrix<S>>& values) {
  for (std::size_t i = 0; i < store.size(); ++i) store.tensor(i).value = values[i];
}

}  // namespace

double joint_loss(double intent_loss, double slot_loss, const TrainConfig& config) {
  require_loss(intent_loss, "intent loss");
  require_loss(slot_loss, "slot loss");
  return config.alpha_intent * intent_loss + config.alpha_slot * slot_loss;
}

template <typename S>
Var<S> joint_loss(Var<S> intent_loss, Var<S> slot_loss, const TrainConfig& config) {
  require_loss(static_cast<double>(intent_loss.item()), "intent loss");
  require_loss(static_cast<double>(slot_loss.item()), "slot loss");
  return scale(intent_loss, static_cast<S>(config.alpha_intent)) + scale(slot_loss, static_cast<S>(config.alpha_slot));
}

template <typename S>
Var<S> batch_loss(SluModel<S>& model, Graph<S>& graph, const LabeledBatch& batch, const TrainConfig& config,
                  bool train, Rng* rng, BatchLoss* parts) {
  HeadSet want = heads_for(config.mode);
  want.intent = want.intent && model.heads().intent;
  want.slot = want.slot && model.heads().slot;
  if (!want.intent && !want.slot) throw std::invalid_argument("batch_loss: the model lacks the head this mode trains");
  const auto out = model.forward(graph, batch.tokens, train, rng, want);
  const auto& heads = model.config().heads;
  std::optional<Var<S>> li, ls;
  if (out.intent_logits) li = intent_loss(*out.intent_logits, std::span<const int>(batch.intents), heads);
  if (out.slot_logits) {
    ls = slot_loss(graph, model.params(), *out.slot_logits, std::span<const Segment>(batch.tokens.segments),
                   std::span<const int>(batch.tags), heads);
  }
  // Combined without joint_loss's checks so a non-finite value reaches the
  // caller, which knows the batch.
  const auto weighted = [](Var<S> loss, double alpha) { return scale(loss, static_cast<S>(alpha)); };
  const Var<S> total = li && ls ? weighted(*li, config.alpha_intent) + weighted(*ls, config.alpha_slot)
                       : li     ? weighted(*li, config.alpha_intent)
                                : weighted(*ls, config.alpha_slot);
  if (parts) {
    parts->intent = li ? static_cast<double>(li->item()) : 0.0;
    parts->slot = ls ? static_cast<double>(ls->item()) : 0.0;
    parts->total = static_cast<double>(total.item());
  }
  return total;
}

double selection_score(const EvalReport& dev, SelectMetric metric, TrainMode mode) {
  if (metric == SelectMetric::kAuto) {
    metric = mode == TrainMode::kJoint        ? SelectMetric::kSum
             : mode == TrainMode::kIntentOnly ? SelectMetric::kIntentAccuracy
                                              : SelectMetric::kSlotF1;
  }
  switch (metric) {
    case SelectMetric::kSlotF1:
      return dev.slots.f1;
    case SelectMetric::kIntentAccuracy:
      return dev.intent_accuracy;
    default:
      return dev.slots.f1 + dev.intent_accuracy;
  }
}

int select_best(const TrainHistory& history, SelectMetric metric, TrainMode mode) {
  if (history.epochs.empty()) throw std::invalid_argument("select_best: empty history");
  int best = 0;
  double best_score = selection_score(history.epochs[0].dev, metric, mode);
  for (std::size_t i = 1; i < history.epochs.size(); ++i) {
    const double s = selection_score(history.epochs[i].dev, metric, mode);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

template <typename S>
TrainHistory train(SluModel<S>& model, const std::vector<Utterance>& train_set, const std::vector<Utterance>& dev_set,
                   const TrainConfig& config, std::uint64_t seed, const TrainOptions& options) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (dev_set.empty()) throw std::invalid_argument("train: empty dev set");

  Rng root(seed);
  Rng order_rng = root.fork();
  Rng dropout_rng = root.fork();
  Adam<S> adam(AdamOptions{config.lr});
  auto& params = model.params();
  params.zero_grad();

  TrainHistory history;
  std::vector<Matrix<S>> best_values = snapshot(params);
  double best_score = -1.0;
  int stale = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    order_rng.shuffle(std::span<std::size_t>(order));
    EpochRecord record;
    record.epoch = epoch;
    record.seed = seed;
    const auto batches = batch_pointers(train_set, order, config.batch_size);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const LabeledBatch batch = model.make_batch(batches[b]);
      Graph<S> graph;
      BatchLoss parts;
      const Var<S> loss = batch_loss(model, graph, batch, config, true, &dropout_rng, &parts);
      if (!std::isfinite(parts.total)) {
        throw TrainingError("non-finite loss " + std::to_string(parts.total) + " at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b) + " (first utterance: '" +
                            (batches[b].empty() || batches[b][0]->tokens.empty() ? std::string()
                                                                                 : batches[b][0]->tokens[0]) +
                            "...')");
      }
      graph.backward(loss);
      if (config.clip_norm > 0.0) clip_grad_norm(params, config.clip_norm);
      adam.step(params);
      record.loss.intent += parts.intent / static_cast<double>(batches.size());
      record.loss.slot += parts.slot / static_cast<double>(batches.size());
      record.loss.total += parts.total / static_cast<double>(batches.size());
    }
    record.dev = evaluate(model, dev_set, config.batch_size);
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(record);
    if (options.metrics_log) write_metrics_record(*options.metrics_log, record);

    const double score = selection_score(record.dev, config.select_metric, config.mode);
    if (score > best_score) {
      best_score = score;
      history.best_epoch = epoch;
      best_values = snapshot(params);
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
    if (options.on_epoch && !options.on_epoch(record)) break;
  }
  restore(params, best_values);
  return history;
}

void write_metrics_record(std::ostream& out, const EpochRecord& r) {
  Json j;
  j["epoch"] = r.epoch;
  j["seed"] = r.seed;
  j["loss"] = r.loss.total;
  j["intent_loss"] = r.loss.intent;
  j["slot_loss"] = r.loss.slot;
  j["dev_slot_precision"] = r.dev.slots.precision;
  j["dev_slot_recall"] = r.dev.slots.recall;
  j["dev_slot_f1"] = r.dev.slots.f1;
  j["dev_intent_accuracy"] = r.dev.intent_accuracy;
  j["dev_token_accuracy"] = r.dev.token_accuracy;
  out << j.dump() << '\n';
}

std::vector<EpochRecord> read_metrics_log(std::istream& in, const std::string& source_name) {
  std::vector<EpochRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const Json j = Json::parse(line);
      EpochRecord r;
      r.epoch = j.at("epoch").get<int>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.loss.total = j.at("loss").get<double>();
      r.loss.intent = j.at("intent_loss").get<double>();
      r.loss.slot = j.at("slot_loss").get<double>();
      r.dev.slots.precision = j.at("dev_slot_precision").get<double>();
      r.dev.slots.recall = j.at("dev_slot_recall").get<double>();
      r.dev.slots.f1 = j.at("dev_slot_f1").get<double>();
      r.dev.intent_accuracy = j.at("dev_intent_accuracy").get<double>();
      r.dev.token_accuracy = j.value("dev_token_accuracy", 0.0);
      out.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(source_name, line_no, std::string("bad metrics record: ") + e.what());
    }
  }
  return out;
}

template Var<float> joint_loss<float>(Var<float>, Var<float>, const TrainConfig&);
template Var<double> joint_loss<double>(Var<double>, Var<double>, const TrainConfig&);
template Var<float> batch_loss<float>(SluModel<float>&, Graph<float>&, const LabeledBatch&, const TrainConfig&, bool,
                                      Rng*, BatchLoss*);
template Var<double> batch_loss<double>(SluModel<double>&, Graph<double>&, const LabeledBatch&, const TrainConfig&,
                                        bool, Rng*, BatchLoss*);
template TrainHistory train<float>(SluModel<float>&, const std::vector<Utterance>&, const std::vector<Utterance>&,
                                   const TrainConfig&, std::uint64_t, const TrainOptions&);
template TrainHistory train<double>(SluModel<double>&, const std::vector<Utterance>&, const std::vector<Utterance>&,
                                    const TrainConfig&, std::uint64_t, const TrainOptions&);

}  // namespace slu
