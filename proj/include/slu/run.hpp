#pragma once

#include "slu/checkpoint.hpp"
#include "slu/config_json.hpp"
#include "slu/trainer.hpp"
#include "slu/transfer.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace slu {

/// One experiment, read from a JSON file:
///
///   {
///     "data": {"train": "train.txt", "dev": "dev.txt", "test": "test.txt"},
///     "gazetteer": "cities.gaz",
///     "embeddings": "glove.100d.txt",
///     "dataset_id": "atis-en",
///     "output_dir": "runs/highway",
///     "jobs": 1,
///     "vocab_from_embeddings": false,
///     "model": {"variant": "Highway:W+CNN", ...},
///     "training": {"seeds": [1, 2, 3, 4, 5], ...}
///   }
///
/// Only data.train, data.dev and output_dir are required. Relative paths are
/// resolved against the directory of the config file.
struct RunConfig {
  std::filesystem::path train_path;
  std::filesystem::path dev_path;
  std::optional<std::filesystem::path> test_path;
  std::optional<std::filesystem::path> gazetteer_path;
  std::optional<std::filesystem::path> embeddings_path;
  std::string dataset_id;
  std::filesystem::path output_dir;
  int jobs = 1;  // seeds trained concurrently
  // Add every word of the embedding file to the word vocabulary, so words
  // unseen in training still get their pre-trained row.
  bool vocab_from_embeddings = false;
  ModelConfig model;
  TrainConfig training;
};

RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir);
/// Parses and validates, including that every input file exists.
RunConfig load_run_config(const std::filesystem::path& path);
Json to_json(const RunConfig& config);

struct SeedResult {
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  TrainHistory history;
  EvalReport dev;
  std::optional<EvalReport> test;
};

struct RunResult {
  std::vector<SeedResult> seeds;
  AggregateReport dev;
  std::optional<AggregateReport> test;
};

struct TransferSpec {
  const Checkpoint* source = nullptr;
  TransferSetting setting = TransferSetting::kAll;
  TransferOptions options;
};

/// Trains one model per seed and writes, under output_dir:
///   config.json              the resolved configuration
///   seed-<s>/model.ckpt      best-epoch checkpoint
///   seed-<s>/metrics.jsonl   per-epoch metrics log
///   seed-<s>/eval.txt        "dev." and "test." report records
///   seed-<s>/transfer.txt    transfer report (transfer runs only)
///   summary.txt              table of seed means
/// With `transfer`, each seed's model is initialised by transfer_init before
/// training.
RunResult run_experiment(const RunConfig& config, const TransferSpec* transfer = nullptr,
                         std::ostream* progress = nullptr);

/// Loads a dataset and the model inputs of a run (vocabularies come from the
/// training set, plus the embedding words if vocab_from_embeddings is set).
struct RunInputs {
  Dataset train;
  Dataset dev;
  std::optional<Dataset> test;
  GazetteerSet gazetteer;
};
RunInputs load_run_inputs(const RunConfig& config);

/// The untrained model a run starts from for `seed` (embeddings loaded).
std::unique_ptr<SluModel<float>> initial_model(const RunConfig& config, const RunInputs& inputs, std::uint64_t seed);

/// Aggregated rows for `report`: every argument that holds an eval.txt is a
/// seed directory and all of them form one row; every argument with
/// seed-*/eval.txt children forms a row of its own. The test split is used
/// when present, otherwise dev.
std::vector<std::pair<std::string, AggregateReport>> collect_reports(const std::vector<std::filesystem::path>& dirs);

}  // namespace slu
