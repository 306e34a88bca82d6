#include "slu/run.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace slu {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

void require_file(const fs::path& p, const std::string& key) {
  if (!fs::is_regular_file(p)) throw ConfigError(key + ": file not found: " + p.string());
}

Dataset load_split(const fs::path& path, bool vocab) { return parse_dataset(path, vocab); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path seed_dir(const RunConfig& config, std::uint64_t seed) {
  return config.output_dir / ("seed-" + std::to_string(seed));
}

}  // namespace

RunConfig run_config_from_json(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  StrictObject o(j, "run");
  const Json* data = o.child("data");
  if (!data) throw ConfigError("run.data: missing (needs train and dev paths)");
  {
    StrictObject d(*data, "run.data");
    std::string train, dev, test;
    d.read("train", train);
    d.read("dev", dev);
    d.read("test", test);
    d.finish();
    if (train.empty()) throw ConfigError("run.data.train: missing dataset path");
    if (dev.empty()) throw ConfigError("run.data.dev: missing dataset path");
    c.train_path = resolve(base_dir, train);
    c.dev_path = resolve(base_dir, dev);
    if (!test.empty()) c.test_path = resolve(base_dir, test);
  }
  std::string gazetteer, embeddings, output_dir;
  o.read("gazetteer", gazetteer);
  o.read("embeddings", embeddings);
  o.read("dataset_id", c.dataset_id);
  o.read("output_dir", output_dir);
  o.read("jobs", c.jobs);
  o.read("vocab_from_embeddings", c.vocab_from_embeddings);
  if (!gazetteer.empty()) c.gazetteer_path = resolve(base_dir, gazetteer);
  if (!embeddings.empty()) c.embeddings_path = resolve(base_dir, embeddings);
  if (output_dir.empty()) throw ConfigError("run.output_dir: missing");
  c.output_dir = resolve(base_dir, output_dir);
  if (c.jobs < 1) throw ConfigError("run.jobs must be >= 1");
  if (c.vocab_from_embeddings && !c.embeddings_path) {
    throw ConfigError("run.vocab_from_embeddings: no embeddings file is given");
  }
  if (const Json* m = o.child("model")) c.model = model_config_from_json(*m, "run.model");
  if (const Json* t = o.child("training")) c.training = train_config_from_json(*t, "run.training");
  o.finish();
  if (c.dataset_id.empty()) c.dataset_id = c.train_path.stem().string();
  c.model.validate();
  c.training.validate();
  if (c.model.embedder.use_gazetteer && !c.gazetteer_path) {
    throw ConfigError("run.gazetteer: the model uses gazetteer features but no gazetteer file is given");
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run config " + path.string());
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c = run_config_from_json(j, path.parent_path());
  require_file(c.train_path, "run.data.train");
  require_file(c.dev_path, "run.data.dev");
  if (c.test_path) require_file(*c.test_path, "run.data.test");
  if (c.gazetteer_path) require_file(*c.gazetteer_path, "run.gazetteer");
  if (c.embeddings_path) require_file(*c.embeddings_path, "run.embeddings");
  return c;
}

Json to_json(const RunConfig& c) {
  Json j;
  j["data"] = {{"train", c.train_path.string()}, {"dev", c.dev_path.string()}};
  if (c.test_path) j["data"]["test"] = c.test_path->string();
  if (c.gazetteer_path) j["gazetteer"] = c.gazetteer_path->string();
  if (c.embeddings_path) j["embeddings"] = c.embeddings_path->string();
  j["dataset_id"] = c.dataset_id;
  j["output_dir"] = c.output_dir.string();
  j["jobs"] = c.jobs;
  j["vocab_from_embeddings"] = c.vocab_from_embeddings;
  j["model"] = to_json(c.model);
  j["training"] = to_json(c.training);
  return j;
}

RunInputs load_run_inputs(const RunConfig& config) {
  RunInputs in;
  in.train = load_split(config.train_path, true);
  in.dev = load_split(config.dev_path, false);
  if (config.test_path) in.test = load_split(*config.test_path, false);
  if (config.gazetteer_path) in.gazetteer = parse_gazetteer(*config.gazetteer_path);
  if (config.vocab_from_embeddings) {
    std::ifstream file(*config.embeddings_path);
    if (!file) throw FormatError(config.embeddings_path->string(), 0, "cannot open file");
    auto& v = *in.train.vocab;
    for (std::string line; std::getline(file, line);) {
      const std::string word = line.substr(0, line.find(' '));
      if (word.empty()) continue;
      v.words.add(lowercase(word));
      for (const auto& ch : utf8_chars(word)) v.chars.add(ch);
    }
  }
  return in;
}

std::unique_ptr<SluModel<float>> initial_model(const RunConfig& config, const RunInputs& inputs, std::uint64_t seed) {
  auto model = std::make_unique<SluModel<float>>(config.model, *inputs.train.vocab, inputs.gazetteer, seed);
  model->dataset_id = config.dataset_id;
  if (config.embeddings_path && config.model.embedder.use_word) {
    // Rows of words missing from the file get their own seeded draw.
    Rng rng(seed ^ 0x5eedf00dULL);
    const auto emb = load_embeddings(*config.embeddings_path, model->vocab().words, config.model.embedder.word_dim,
                                     rng, !config.model.embedder.fixed_word_embeddings);
    model->set_word_embeddings(emb);
  }
  return model;
}

RunResult run_experiment(const RunConfig& config, const TransferSpec* transfer, std::ostream* progress) {
  RunInputs inputs = load_run_inputs(config);
  if (transfer && adopt_source_labels(*inputs.train.vocab, checkpoint_vocabularies(*transfer->source)) && progress) {
    *progress << "target label inventory taken from the source checkpoint\n";
  }
  fs::create_directories(config.output_dir);
  write_text(config.output_dir / "config.json", to_json(config).dump(2) + "\n");

  const auto& seeds = config.training.seeds;
  RunResult result;
  result.seeds.resize(seeds.size());
  std::mutex progress_mutex;
  auto say = [&](const std::string& line) {
    if (!progress) return;
    std::lock_guard<std::mutex> lock(progress_mutex);
    *progress << line << std::endl;
  };

  auto run_seed = [&](std::size_t index) {
    const std::uint64_t seed = seeds[index];
    const fs::path dir = seed_dir(config, seed);
    fs::create_directories(dir);
    auto model = initial_model(config, inputs, seed);
    if (transfer) {
      const auto report = transfer_init(*transfer->source, *model, transfer->setting, transfer->options);
      std::ostringstream text;
      write_transfer_report(text, report);
      write_text(dir / "transfer.txt", text.str());
      for (const auto& w : report.warnings) say("seed " + std::to_string(seed) + ": warning: " + w);
    }
    std::ostringstream log;
    TrainOptions options;
    options.metrics_log = &log;
    options.on_epoch = [&](const EpochRecord& r) {
      say("seed " + std::to_string(seed) + " epoch " + std::to_string(r.epoch) + " loss " +
          std::to_string(r.loss.total) + " dev F1 " + percent(r.dev.slots.f1) + " acc " +
          percent(r.dev.intent_accuracy));
      return true;
    };
    SeedResult& out = result.seeds[index];
    out.seed = seed;
    out.dir = dir;
    out.history = train(*model, inputs.train.utterances, inputs.dev.utterances, config.training, seed, options);
    write_text(dir / "metrics.jsonl", log.str());
    Json extra = {{"best_epoch", out.history.best_epoch}, {"train_config", to_json(config.training)}};
    if (transfer) extra["transfer_setting"] = to_string(transfer->setting);
    save_checkpoint(make_checkpoint(*model, extra), dir / "model.ckpt");

    out.dev = evaluate(*model, inputs.dev.utterances, config.training.batch_size);
    std::ostringstream records;
    write_report_records(records, out.dev, "dev.");
    if (inputs.test) {
      out.test = evaluate(*model, inputs.test->utterances, config.training.batch_size);
      write_report_records(records, *out.test, "test.");
    }
    write_text(dir / "eval.txt", records.str());
  };

  const std::size_t jobs = std::min<std::size_t>(static_cast<std::size_t>(config.jobs), seeds.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) run_seed(i);
  } else {
    std::mutex next_mutex;
    std::size_t next = 0;
    std::exception_ptr failure;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        while (true) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(next_mutex);
            if (next >= seeds.size() || failure) return;
            i = next++;
          }
          try {
            run_seed(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(next_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<EvalReport> dev, test;
  for (const auto& s : result.seeds) {
    dev.push_back(s.dev);
    if (s.test) test.push_back(*s.test);
  }
  result.dev = aggregate(dev);
  std::vector<std::pair<std::string, EvalReport>> rows = {{"dev", result.dev.mean}};
  if (!test.empty()) {
    result.test = aggregate(test);
    rows.emplace_back("test", result.test->mean);
  }
  std::ostringstream summary;
  summary << variant_name(config.model) << ", mean of " << seeds.size() << " seed(s)\n";
  write_report_table(summary, rows);
  write_text(config.output_dir / "summary.txt", summary.str());
  return result;
}

std::vector<std::pair<std::string, AggregateReport>> collect_reports(const std::vector<fs::path>& dirs) {
  auto read_one = [](const fs::path& dir) {
    const fs::path file = dir / "eval.txt";
    const std::string text = read_text(file);
    const bool has_test = text.find("test.slot_f1=") != std::string::npos;
    std::istringstream in(text);
    return read_report_records(in, file.string(), has_test ? "test." : "dev.");
  };
  std::vector<std::pair<std::string, AggregateReport>> rows;
  std::vector<EvalReport> loose;
  std::string loose_label;
  for (const auto& dir : dirs) {
    if (!fs::is_directory(dir)) throw ConfigError("report: not a directory: " + dir.string());
    if (fs::is_regular_file(dir / "eval.txt")) {
      loose.push_back(read_one(dir));
      if (loose_label.empty()) {
        const auto parent = fs::absolute(dir).lexically_normal().parent_path().filename().string();
        loose_label = parent.empty() ? dir.filename().string() : parent;
      }
      continue;
    }
    std::vector<fs::path> seeds;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && entry.path().filename().string().rfind("seed-", 0) == 0 &&
          fs::is_regular_file(entry.path() / "eval.txt")) {
        seeds.push_back(entry.path());
      }
    }
    if (seeds.empty()) throw ConfigError("report: no eval.txt under " + dir.string());
    std::sort(seeds.begin(), seeds.end());
    std::vector<EvalReport> reports;
    for (const auto& s : seeds) reports.push_back(read_one(s));
    auto label = fs::absolute(dir).lexically_normal().filename().string();
    if (label.empty()) label = fs::absolute(dir).lexically_normal().parent_path().filename().string();
    rows.emplace_back(label, aggregate(reports));
  }
  if (!loose.empty()) rows.insert(rows.begin(), {loose_label, aggregate(loose)});
  return rows;
}

}  // namespace slu
