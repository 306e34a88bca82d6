#include "doctest.h"

#include "slu/trainer.hpp"
#include "support.hpp"

#include <cmath>
#include <sstream>

using namespace slu;
using slu::testing::bit_equal;

namespace {

std::vector<Utterance> toy_train() {
  Rng rng(11);
  return slu::testing::toy_corpus(rng, 24);
}

template <typename S>
SluModel<S> toy_model(const std::vector<Utterance>& data, std::uint64_t seed = 3,
                      EncoderKind kind = EncoderKind::kHighwayLstm) {
  return SluModel<S>(slu::testing::small_config(kind), build_vocabularies(data), slu::testing::toy_gazetteer(), seed);
}

TrainConfig quick_train(int epochs = 3) {
  TrainConfig c;
  c.batch_size = 8;
  c.max_epochs = epochs;
  c.patience = epochs;
  c.lr = 0.01;
  return c;
}

EpochRecord record_with(double f1, double acc) {
  EpochRecord r;
  r.dev.slots.f1 = f1;
  r.dev.intent_accuracy = acc;
  return r;
}

template <typename S>
std::vector<Matrix<S>> values_of(const ParameterStore<S>& store, std::string_view prefix) {
  std::vector<Matrix<S>> out;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store.name(i).rfind(prefix, 0) == 0) out.push_back(store.tensor(i).value);
  }
  return out;
}

template <typename S>
bool all_bit_equal(const std::vector<Matrix<S>>& a, const std::vector<Matrix<S>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!bit_equal<S>(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("joint_loss") {
  const TrainConfig c;
  CHECK(joint_loss(1.0, 2.0, c) == doctest::Approx(1.8).epsilon(1e-15));
  CHECK(joint_loss(0.0, 0.0, c) == 0.0);
  TrainConfig slot_only = c;
  slot_only.alpha_intent = 0.0;
  CHECK(joint_loss(5.0, 2.0, slot_only) == doctest::Approx(0.8 * 2.0).epsilon(1e-15));
  CHECK_THROWS_AS(joint_loss(-0.1, 1.0, c), std::invalid_argument);
  CHECK_THROWS_AS(joint_loss(1.0, NAN, c), std::invalid_argument);
}

TEST_CASE("select_best") {
  TrainHistory h;
  CHECK_THROWS_AS(select_best(h, SelectMetric::kAuto, TrainMode::kJoint), std::invalid_argument);
  h.epochs = {record_with(0.2, 0.3)};
  CHECK(select_best(h, SelectMetric::kAuto, TrainMode::kJoint) == 0);

  h.epochs.clear();
  for (int i = 0; i < 6; ++i) h.epochs.push_back(record_with(0.1 * i, 0.1 * i));
  CHECK(select_best(h, SelectMetric::kAuto, TrainMode::kJoint) == 5);

  h.epochs = {record_with(.1, .1), record_with(.2, .2), record_with(.3, .3), record_with(.9, .9),
              record_with(.5, .5), record_with(.9, .9), record_with(.4, .4)};
  CHECK(select_best(h, SelectMetric::kAuto, TrainMode::kJoint) == 3);

  // The auto metric follows the trained task.
  h.epochs = {record_with(0.9, 0.1), record_with(0.1, 0.9)};
  CHECK(select_best(h, SelectMetric::kAuto, TrainMode::kSlotOnly) == 0);
  CHECK(select_best(h, SelectMetric::kAuto, TrainMode::kIntentOnly) == 1);
  CHECK(select_best(h, SelectMetric::kSlotF1, TrainMode::kJoint) == 0);
}

TEST_CASE("initial loss is close to the uniform-prediction loss") {
  const auto data = toy_train();
  for (auto kind : slu::testing::all_encoder_kinds()) {
    CAPTURE(to_string(kind));
    auto model = toy_model<double>(data, 5, kind);
    const auto batch = model.make_batch(slu::testing::pointers(data));
    Graph<double> graph(false);
    BatchLoss parts;
    const TrainConfig config;
    batch_loss(model, graph, batch, config, false, nullptr, &parts);
    const double uniform = config.alpha_intent * std::log(model.vocab().intents.size()) +
                           config.alpha_slot * std::log(model.vocab().tags.size());
    CHECK(std::abs(parts.total - uniform) <= 0.2 * uniform);
  }
}

TEST_CASE("scaling both loss weights scales the step-0 loss") {
  const auto data = toy_train();
  auto model = toy_model<double>(data);
  const auto batch = model.make_batch(slu::testing::pointers(data));
  TrainConfig small;
  TrainConfig large;
  large.alpha_intent = 2.0;
  large.alpha_slot = 8.0;
  BatchLoss a, b;
  Graph<double> g1(false), g2(false);
  batch_loss(model, g1, batch, small, false, nullptr, &a);
  batch_loss(model, g2, batch, large, false, nullptr, &b);
  CHECK(a.intent == b.intent);
  CHECK(a.slot == b.slot);
  CHECK(std::abs(b.total - 10.0 * a.total) <= 1e-12 * b.total);
}

TEST_CASE("single-task modes leave the other head untouched") {
  const auto data = toy_train();
  SUBCASE("intent-only") {
    auto model = toy_model<float>(data);
    const auto slot_before = values_of(model.params(), "slot.");
    const auto trunk_before = values_of(model.params(), "encoder.");
    auto config = quick_train(2);
    config.mode = TrainMode::kIntentOnly;
    train(model, data, data, config, 1);
    CHECK(all_bit_equal(slot_before, values_of(model.params(), "slot.")));
    CHECK_FALSE(all_bit_equal(trunk_before, values_of(model.params(), "encoder.")));
  }
  SUBCASE("slot-only") {
    auto model = toy_model<float>(data);
    const auto intent_before = values_of(model.params(), "intent.");
    auto config = quick_train(2);
    config.mode = TrainMode::kSlotOnly;
    train(model, data, data, config, 1);
    CHECK(all_bit_equal(intent_before, values_of(model.params(), "intent.")));
  }
}

TEST_CASE("training is deterministic per seed") {
  const auto data = toy_train();
  auto a = toy_model<float>(data);
  auto b = toy_model<float>(data);
  auto c = toy_model<float>(data);
  std::ostringstream log_a, log_b;
  train(a, data, data, quick_train(), 7, {nullptr, &log_a});
  train(b, data, data, quick_train(), 7, {nullptr, &log_b});
  train(c, data, data, quick_train(), 8);
  CHECK(all_bit_equal(values_of(a.params(), ""), values_of(b.params(), "")));
  CHECK_FALSE(all_bit_equal(values_of(a.params(), ""), values_of(c.params(), "")));
  CHECK(log_a.str() == log_b.str());
}

TEST_CASE("the model keeps the best epoch and its dev metrics are reproducible") {
  const auto data = toy_train();
  Rng rng(12);
  const auto dev = slu::testing::toy_corpus(rng, 10);
  auto model = toy_model<float>(data);
  const auto history = train(model, data, dev, quick_train(6), 2);
  REQUIRE(history.best_epoch >= 0);
  CHECK(history.best_epoch == select_best(history, SelectMetric::kAuto, TrainMode::kJoint));
  const auto again = evaluate(model, dev, 8);
  const auto& best = history.epochs[static_cast<std::size_t>(history.best_epoch)].dev;
  CHECK(again.slots.f1 == best.slots.f1);
  CHECK(again.intent_accuracy == best.intent_accuracy);
  CHECK(again.token_accuracy == best.token_accuracy);
}

TEST_CASE("early stopping and the epoch callback") {
  const auto data = toy_train();
  SUBCASE("patience") {
    auto model = toy_model<float>(data);
    auto config = quick_train(20);
    config.lr = 1e-30;  // nothing improves
    config.patience = 2;
    const auto history = train(model, data, data, config, 1);
    CHECK(history.epochs.size() == 3);
    CHECK(history.best_epoch == 0);
  }
  SUBCASE("callback") {
    auto model = toy_model<float>(data);
    int calls = 0;
    const auto history = train(model, data, data, quick_train(20), 1, {[&](const EpochRecord&) {
                                                                        return ++calls < 2;
                                                                      }});
    CHECK(history.epochs.size() == 2);
  }
}

TEST_CASE("a non-finite loss aborts with the batch") {
  const auto data = toy_train();
  auto model = toy_model<float>(data);
  model.params().at("intent.output.b").value(0, 0) = NAN;
  try {
    train(model, data, data, quick_train(), 1);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("epoch 0, batch 0") != std::string::npos);
  }
}

TEST_CASE("metrics log round trip") {
  const auto data = toy_train();
  auto model = toy_model<float>(data);
  std::stringstream log;
  const auto history = train(model, data, data, quick_train(), 4, {nullptr, &log});
  const auto records = read_metrics_log(log, "log");
  REQUIRE(records.size() == history.epochs.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].epoch == static_cast<int>(i));
    CHECK(records[i].seed == 4);
    CHECK(records[i].loss.total == history.epochs[i].loss.total);
    CHECK(records[i].dev.slots.f1 == history.epochs[i].dev.slots.f1);
  }
  std::istringstream bad("{\"epoch\": 1}\n");
  CHECK_THROWS_AS(read_metrics_log(bad, "bad"), FormatError);
}

TEST_CASE("configuration errors surface before training") {
  const auto data = toy_train();
  auto model = toy_model<float>(data);
  auto config = quick_train();
  config.alpha_intent = 0.0;
  CHECK_THROWS_AS(train(model, data, data, config, 1), ConfigError);
  CHECK_THROWS_AS(train(model, {}, data, quick_train(), 1), std::invalid_argument);
}
