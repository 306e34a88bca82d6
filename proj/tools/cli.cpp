#include "cli.hpp"

#include "slu/diagnostics.hpp"
#include "slu/run.hpp"
#include "slu/synthetic.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace slu::cli {

namespace fs = std::filesystem;

namespace {

// A rejected input (bad config, file or checkpoint) as opposed to a failure
// while computing.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

int cmd_train(const std::string& config_path, int jobs, bool quiet, std::ostream& out, std::ostream& err) {
  RunConfig config = load_run_config(config_path);
  if (jobs > 0) config.jobs = jobs;
  const auto result = run_experiment(config, nullptr, quiet ? nullptr : &err);
  for (const auto& s : result.seeds) out << "seed " << s.seed << ": " << (s.dir / "model.ckpt").string() << '\n';
  std::vector<std::pair<std::string, EvalReport>> rows = {{"dev", result.dev.mean}};
  if (result.test) rows.emplace_back("test", result.test->mean);
  write_report_table(out, rows);
  return kSuccess;
}

int cmd_transfer(const std::string& source_path, const std::string& config_path, const std::string& setting_name,
                 bool reinit, int jobs, bool quiet, std::ostream& out, std::ostream& err) {
  const TransferSetting setting = parse_transfer_setting(setting_name);
  RunConfig config = load_run_config(config_path);
  if (jobs > 0) config.jobs = jobs;
  const Checkpoint source = load_checkpoint(source_path);
  TransferSpec spec{&source, setting, TransferOptions{reinit}};
  const auto result = run_experiment(config, &spec, quiet ? nullptr : &err);
  for (const auto& s : result.seeds) {
    out << "seed " << s.seed << ": " << (s.dir / "model.ckpt").string() << " (report "
        << (s.dir / "transfer.txt").string() << ")\n";
  }
  std::vector<std::pair<std::string, EvalReport>> rows = {{"dev", result.dev.mean}};
  if (result.test) rows.emplace_back("test", result.test->mean);
  write_report_table(out, rows);
  return kSuccess;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path, const std::string& config_path,
             bool records, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  auto model = model_from_checkpoint(ckpt);
  if (!config_path.empty()) {
    const RunConfig config = load_run_config(config_path);
    const RunInputs inputs = load_run_inputs(config);
    const SluModel<float> expected(config.model, *inputs.train.vocab, inputs.gazetteer, 1);
    verify_compatible(ckpt, expected);
  }
  const Dataset data = parse_dataset(data_path);
  if (data.utterances.empty()) throw ValidationError(data_path + ": no utterances");
  const EvalReport report = evaluate(*model, data.utterances);
  if (records) {
    write_report_records(out, report);
  } else {
    write_report_table(out, {{fs::path(checkpoint_path).parent_path().filename().string(), report}});
  }
  return kSuccess;
}

int cmd_gradcheck(const std::string& config_path, bool all_kinds, std::uint64_t seed, double tolerance,
                  std::ostream& out) {
  ModelConfig base;
  if (!config_path.empty()) {
    const Json j = read_json_file(config_path);
    if (j.contains("data")) {
      base = run_config_from_json(j, fs::path(config_path).parent_path()).model;
    } else {
      base = model_config_from_json(j);
    }
  }
  std::vector<EncoderKind> kinds = {base.encoder.kind};
  if (all_kinds) {
    kinds = {EncoderKind::kGru, EncoderKind::kHighwayLstm, EncoderKind::kMultiHead, EncoderKind::kBiBlock};
  }
  double worst = 0.0;
  for (auto kind : kinds) {
    ModelConfig c = base;
    c.encoder.kind = kind;
    const auto r = check_model_gradients(gradcheck_config(c), seed);
    out << to_string(kind) << " max_rel_error=" << r.max_error << " worst=" << r.worst_tensor
        << " coordinates=" << r.coordinates << '\n';
    worst = std::max(worst, r.max_error);
  }
  out << "max_rel_error=" << worst << (worst <= tolerance ? " ok" : " FAILED") << '\n';
  return worst <= tolerance ? kSuccess : kRuntime;
}

int cmd_report(const std::vector<std::string>& dirs, bool records, std::ostream& out) {
  std::vector<fs::path> paths(dirs.begin(), dirs.end());
  const auto rows = collect_reports(paths);
  if (records) {
    for (const auto& [label, agg] : rows) {
      write_report_records(out, agg.mean, label + ".");
      out << label << ".runs=" << agg.runs.size() << '\n';
    }
  } else {
    std::vector<std::pair<std::string, EvalReport>> table;
    for (const auto& [label, agg] : rows) table.emplace_back(label + " (" + std::to_string(agg.runs.size()) + ")", agg.mean);
    write_report_table(out, table);
  }
  return kSuccess;
}

int cmd_predict(const std::string& checkpoint_path, std::istream& in, std::ostream& out) {
  auto model = model_from_checkpoint(load_checkpoint(checkpoint_path));
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(t);
    if (tokens.empty()) continue;
    const auto p = model->predict_tokens({tokens}).front();
    if (!first) out << '\n';
    first = false;
    std::vector<Utterance> u = {{tokens, p.tags, p.intent.empty() ? "-" : p.intent}};
    write_dataset(out, u);
  }
  return kSuccess;
}

int cmd_synth(const std::string& output_dir, const SyntheticOptions& options, std::ostream& out) {
  const SyntheticPair pair = make_synthetic_pair(options);
  const fs::path dir(output_dir);
  fs::create_directories(dir);
  const std::pair<const char*, const std::vector<Utterance>*> files[] = {
      {"source_train.txt", &pair.source_train}, {"source_dev.txt", &pair.source_dev},
      {"target_train.txt", &pair.target_train}, {"target_dev.txt", &pair.target_dev},
      {"target_test.txt", &pair.target_test}};
  for (const auto& [name, data] : files) {
    std::ofstream f(dir / name);
    write_dataset(f, *data);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    out << (dir / name).string() << ": " << data->size() << " utterances\n";
  }
  std::ofstream emb(dir / "embeddings.txt");
  write_embeddings(emb, pair);
  if (!emb) throw std::runtime_error("cannot write " + (dir / "embeddings.txt").string());
  out << (dir / "embeddings.txt").string() << ": " << pair.words.size() << " words\n";
  return kSuccess;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint intent classification and slot filling with cross-lingual weight transfer", "slu"};
  app.require_subcommand(1);
  int jobs = 0;
  bool quiet = false;

  std::string config_path;
  auto* train = app.add_subcommand("train", "train one model per seed from a run config");
  train->add_option("-c,--config", config_path, "run config (JSON)")->required();
  train->add_option("-j,--jobs", jobs, "seeds trained concurrently (overrides the config)");
  train->add_flag("-q,--quiet", quiet, "no per-epoch progress on stderr");

  std::string source_path, setting_name;
  bool reinit = false;
  auto* transfer = app.add_subcommand("transfer", "initialise from a source checkpoint, then train on the target");
  transfer->add_option("-s,--source", source_path, "source checkpoint")->required();
  transfer->add_option("-c,--config", config_path, "target run config (JSON)")->required();
  transfer->add_option("--setting", setting_name, "all | full-slot | full-multidim | full-bilstm")->required();
  transfer->add_flag("--reinit-mismatched-outputs", reinit,
                     "re-initialise output layers whose label inventory differs instead of failing");
  transfer->add_option("-j,--jobs", jobs, "seeds trained concurrently (overrides the config)");
  transfer->add_flag("-q,--quiet", quiet, "no per-epoch progress on stderr");

  std::string checkpoint_path, data_path;
  bool records = false;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  eval->add_option("-m,--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("-d,--data", data_path, "dataset file")->required();
  eval->add_option("-c,--config", config_path, "verify the checkpoint against this run config");
  eval->add_flag("--records", records, "key=value records instead of a table");

  bool all_kinds = false;
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the model gradients");
  gradcheck->add_option("-c,--config", config_path, "model or run config (JSON); defaults otherwise");
  gradcheck->add_flag("--all-kinds", all_kinds, "check every encoder kind");
  gradcheck->add_option("--seed", seed, "instance seed");
  gradcheck->add_option("--tolerance", tolerance, "maximum relative error");

  std::vector<std::string> dirs;
  auto* report = app.add_subcommand("report", "aggregate eval records of run or seed directories");
  report->add_option("dirs", dirs, "run directories or seed directories")->required();
  report->add_flag("--records", records, "key=value records instead of a table");

  auto* predict = app.add_subcommand("predict", "tag utterances read from stdin, one per line");
  predict->add_option("-m,--checkpoint", checkpoint_path, "checkpoint file")->required();

  std::string synth_dir;
  SyntheticOptions synth_options;
  auto* synth = app.add_subcommand("synth", "write the synthetic source/target language pair and its embeddings");
  synth->add_option("-o,--output", synth_dir, "output directory")->required();
  synth->add_option("--seed", synth_options.seed, "generator seed");
  synth->add_option("--dim", synth_options.dim, "embedding dimension")->check(CLI::PositiveNumber);
  synth->add_option("--source-train", synth_options.source_train, "source training utterances");
  synth->add_option("--target-train", synth_options.target_train, "target training utterances");
  synth->add_option("--alignment-noise", synth_options.alignment_noise, "target-vs-source vector noise");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream cli_out, cli_err;
    const int code = app.exit(e, cli_out, cli_err);
    out << cli_out.str();
    err << cli_err.str();
    return code == 0 ? kSuccess : kValidation;
  }

  try {
    if (*train) return cmd_train(config_path, jobs, quiet, out, err);
    if (*transfer) return cmd_transfer(source_path, config_path, setting_name, reinit, jobs, quiet, out, err);
    if (*eval) return cmd_eval(checkpoint_path, data_path, config_path, records, out);
    if (*gradcheck) return cmd_gradcheck(config_path, all_kinds, seed, tolerance, out);
    if (*report) return cmd_report(dirs, records, out);
    if (*predict) return cmd_predict(checkpoint_path, in, out);
    if (*synth) return cmd_synth(synth_dir, synth_options, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kValidation;
}

}  // namespace slu::cli
