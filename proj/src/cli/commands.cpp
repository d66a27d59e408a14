#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "speckle/cli.hpp"
#include "speckle/random.hpp"

#ifndef SPECKLE_DATA_DIR
#define SPECKLE_DATA_DIR "data"
#endif

namespace speckle::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::map<std::string, ScenarioKind> kScenarios{{"focus_sweep", ScenarioKind::focus_sweep},
                                                      {"aperture_sweep", ScenarioKind::aperture_sweep},
                                                      {"nlos", ScenarioKind::nlos},
                                                      {"incoherent_baseline", ScenarioKind::incoherent_baseline}};
const std::map<std::string, Illumination> kIlluminations{{"coherent", Illumination::coherent},
                                                          {"incoherent", Illumination::incoherent}};

/// Options shared by commands that build or load a scenario.
struct ScenarioArgs {
  fs::path config;
  std::string scenario;
  std::string illumination = "coherent";
  std::vector<double> values;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App& app) {
    auto* c = app.add_option("--config", config, "Scenario config JSON")->check(CLI::ExistingFile);
    auto* s = app.add_option("--scenario", scenario, "Built-in scenario")
                  ->check(CLI::IsMember({"focus_sweep", "aperture_sweep", "nlos", "incoherent_baseline"}));
    c->excludes(s);
    app.add_option("--illumination", illumination, "coherent or incoherent (built-in scenarios)")
        ->check(CLI::IsMember({"coherent", "incoherent"}));
    app.add_option("--values", values,
                   "Sweep values for a built-in scenario: distances in m, or apertures in units of D_min")
        ->delimiter(',');
    app.add_option("--seed", seed, "Master seed (overrides the config)");
  }

  ScenarioConfig resolve() const {
    ScenarioConfig c;
    if (!config.empty()) {
      if (!values.empty()) throw UsageError("--values only applies to built-in scenarios");
      c = load_config(config);
    } else if (!scenario.empty()) {
      const ScenarioKind kind = kScenarios.at(scenario);
      const Illumination il = kIlluminations.at(illumination);
      if (kind == ScenarioKind::focus_sweep || kind == ScenarioKind::incoherent_baseline) {
        FocusSweepParams p;
        p.illumination = il;
        if (!values.empty()) p.lab_distances = values;
        c = kind == ScenarioKind::focus_sweep ? build_focus_sweep(p) : build_incoherent_baseline(p);
      } else if (kind == ScenarioKind::aperture_sweep) {
        ApertureSweepParams p;
        p.illumination = il;
        if (!values.empty()) p.multiples = values;
        c = build_aperture_sweep(p);
      } else {
        if (!values.empty()) throw UsageError("nlos has a single sweep point; --values is not accepted");
        if (il != Illumination::coherent) throw UsageError("nlos is coherent only");
        c = build_nlos();
      }
    } else {
      throw UsageError("one of --config or --scenario is required");
    }
    if (seed) c.master_seed = *seed;
    c.validate();
    return c;
  }
};

Architecture pick_arch(const std::string& name, int height, int width) {
  return name == "mlp" ? Architecture::mlp(height, width) : Architecture::default_cnn(height, width);
}

TrainConfig load_train_config(const fs::path& path) {
  if (path.empty()) return {};
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  return train_config_from_json(j);
}

DigitSet load_digits(const fs::path& dir) {
  try {
    return load_idx_dir(dir);
  } catch (const std::exception& e) {
    throw StageError("digits", e.what(), kExitRuntime);
  }
}

void list_dir_outputs(RunManifest& m, const fs::path& dir, const fs::path& skip) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path() != skip) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) m.add_output(f);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speckle-based digit recognition: scenario generation, training, evaluation"};
  app.name(args.empty() ? "speckle-sense" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  bool quiet = false;
  int threads = 1;
  fs::path digits_dir = fs::path(SPECKLE_DATA_DIR) / "mnist";
  auto common = [&](CLI::App* sub) {
    sub->add_option("--threads", threads, "Worker threads for generation")->check(CLI::Range(1, 1024));
    sub->add_flag("--quiet", quiet, "No progress output");
  };

  // generate
  auto* gen = app.add_subcommand("generate", "Render digits through a scenario into an SPKL dataset");
  ScenarioArgs gen_scenario;
  gen_scenario.add_to(*gen);
  int gen_per_class = 512;
  std::vector<int> gen_points;
  fs::path gen_out;
  bool dump_config = false;
  gen->add_option("--digits", digits_dir, "Directory with IDX digit files");
  gen->add_option("--per-class", gen_per_class, "Digits per class")->check(CLI::PositiveNumber);
  gen->add_option("--sweep-points", gen_points, "Sweep indices to render (default all)")->delimiter(',');
  gen->add_option("--out", gen_out, "Output dataset file");
  gen->add_flag("--dump-config", dump_config, "Print the resolved scenario config and exit");
  common(gen);

  // train
  auto* tr = app.add_subcommand("train", "Train a classifier on a dataset");
  fs::path tr_dataset, tr_config, tr_out;
  std::string tr_arch = "cnn";
  std::optional<std::uint64_t> tr_seed;
  std::optional<int> tr_epochs;
  double tr_test = 0.2, tr_val = 0.1;
  tr->add_option("--dataset", tr_dataset, "SPKL dataset")->required()->check(CLI::ExistingFile);
  tr->add_option("--config", tr_config, "Training config JSON")->check(CLI::ExistingFile);
  tr->add_option("--arch", tr_arch, "cnn or mlp")->check(CLI::IsMember({"cnn", "mlp"}));
  tr->add_option("--seed", tr_seed, "Seed for init, shuffling and splits (overrides the config)");
  tr->add_option("--epochs", tr_epochs, "Epoch cap (overrides the config)")->check(CLI::PositiveNumber);
  tr->add_option("--test-fraction", tr_test, "Digits held out as a test set, written next to the params")
      ->check(CLI::Range(0.0, 0.95));
  tr->add_option("--val-fraction", tr_val, "Training digits used for early stopping")->check(CLI::Range(0.01, 0.95));
  tr->add_option("--out", tr_out, "Output params file")->required();
  common(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate params on a dataset");
  fs::path ev_params, ev_dataset, ev_out;
  ev->add_option("--params", ev_params, "SPNN params file")->required()->check(CLI::ExistingFile);
  ev->add_option("--dataset", ev_dataset, "SPKL dataset")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "Report CSV")->required();
  common(ev);

  // sweep
  auto* sw = app.add_subcommand("sweep", "Generate, train and evaluate across a scenario's sweep");
  ScenarioArgs sw_scenario;
  sw_scenario.add_to(*sw);
  int sw_per_class = 512;
  std::vector<int> sw_points;
  fs::path sw_train_config, sw_out;
  std::string sw_mode, sw_arch = "cnn";
  std::optional<std::uint64_t> sw_train_seed;
  std::optional<int> sw_epochs;
  sw->add_option("--digits", digits_dir, "Directory with IDX digit files");
  sw->add_option("--per-class", sw_per_class, "Digits per class")->check(CLI::PositiveNumber);
  sw->add_option("--sweep-points", sw_points, "Sweep indices to run (default all)")->delimiter(',');
  sw->add_option("--train-config", sw_train_config, "Training config JSON")->check(CLI::ExistingFile);
  sw->add_option("--train-seed", sw_train_seed, "Seed for init, shuffling and splits");
  sw->add_option("--epochs", sw_epochs, "Epoch cap")->check(CLI::PositiveNumber);
  sw->add_option("--mode", sw_mode, "joint (one network) or per_point (one per sweep point)")
      ->check(CLI::IsMember({"joint", "per_point"}));
  sw->add_option("--arch", sw_arch, "cnn or mlp")->check(CLI::IsMember({"cnn", "mlp"}));
  sw->add_option("--out", sw_out, "Output directory")->required();
  common(sw);

  // render
  auto* rd = app.add_subcommand("render", "Write dataset samples as PGM images");
  fs::path rd_dataset, rd_out;
  std::vector<long long> rd_indices;
  rd->add_option("--dataset", rd_dataset, "SPKL dataset")->required()->check(CLI::ExistingFile);
  rd->add_option("--indices", rd_indices, "Sample indices")->required()->delimiter(',');
  rd->add_option("--out", rd_out, "Output directory")->required();
  common(rd);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("speckle-sense");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::ostream* log = quiet ? nullptr : &err;
  RunManifest manifest;
  manifest.started = utc_timestamp();
  try {
    if (*gen) {
      manifest.command = "generate";
      const ScenarioConfig config = gen_scenario.resolve();
      if (dump_config) {
        out << to_json(config).dump(2) << '\n';
        return kExitOk;
      }
      if (gen_out.empty()) throw UsageError("--out is required");
      const DigitSet digits = load_digits(digits_dir);
      GenerateOptions opts;
      opts.threads = threads;
      opts.sweep_subset = gen_points;
      if (log) *log << "generating " << gen_per_class << " digits/class x "
                    << (gen_points.empty() ? config.sweep_values.size() : gen_points.size()) << " sweep points\n";
      const SpeckleDataset ds = generate_dataset(config, digits, gen_per_class, opts);
      if (gen_out.has_parent_path()) fs::create_directories(gen_out.parent_path());
      save_dataset(ds, gen_out);
      manifest.config_hash = config_hash(to_json(config));
      manifest.seeds = {{"master_seed", config.master_seed}};
      manifest.add_output(gen_out);
      manifest.write(sibling(gen_out, ".manifest.json"));
      out << "wrote " << ds.size() << " samples to " << gen_out.string() << '\n';
    } else if (*tr) {
      manifest.command = "train";
      TrainConfig cfg = load_train_config(tr_config);
      if (tr_seed) cfg.seed = *tr_seed;
      if (tr_epochs) cfg.epochs = *tr_epochs;
      cfg.validate();
      const SpeckleDataset ds = load_dataset(tr_dataset);
      SpeckleDataset train_ds = ds, test_ds;
      if (tr_test > 0.0) std::tie(train_ds, test_ds) = split(ds, 1.0 - tr_test, cfg.seed);
      auto [fit_ds, val_ds] = split(train_ds, 1.0 - tr_val, mix_seed({cfg.seed, 0x5a11d}));
      const Architecture arch = pick_arch(tr_arch, ds.height, ds.width);
      const Samples fit = to_samples(fit_ds), val = to_samples(val_ds);
      if (log) *log << "training on " << fit.size() << " samples, validating on " << val.size() << '\n';
      const TrainResult result = train(init_network<float>(arch, cfg.seed), fit, val, cfg, [&](const EpochRecord& e) {
        if (log) *log << "epoch " << e.epoch << " loss " << e.train_loss << " train_acc " << e.train_acc
                      << " val_acc " << e.val_acc << std::endl;
      });
      if (tr_out.has_parent_path()) fs::create_directories(tr_out.parent_path());
      save_params(result.params, tr_out);
      const fs::path history = sibling(tr_out, ".history.csv");
      write_history_csv(result.history, history);
      manifest.add_output(tr_out);
      manifest.add_output(history);
      if (test_ds.size() > 0) {
        const fs::path test_path = sibling(tr_out, ".test.spkl");
        save_dataset(test_ds, test_path);
        manifest.add_output(test_path);
      }
      manifest.config_hash = config_hash({{"train", to_json(cfg)},
                                          {"arch", to_json(arch)},
                                          {"dataset_sha256", file_sha256(tr_dataset)},
                                          {"test_fraction", tr_test},
                                          {"val_fraction", tr_val}});
      manifest.seeds = {{"train_seed", cfg.seed}, {"split_seed", cfg.seed}};
      manifest.write(sibling(tr_out, ".manifest.json"));
      out << "best epoch " << result.best_epoch << " of " << result.history.size() << ", val_acc "
          << result.history[static_cast<std::size_t>(result.best_epoch - 1)].val_acc << '\n';
    } else if (*ev) {
      manifest.command = "eval";
      const NetworkParams<float> params = load_params(ev_params);
      const SpeckleDataset ds = load_dataset(ev_dataset);
      const Shape want{1, ds.height, ds.width};
      if (!(params.arch.input == want))
        throw UsageError("params expect " + std::to_string(params.arch.input.height) + "x" +
                         std::to_string(params.arch.input.width) + " inputs, dataset has " +
                         std::to_string(ds.height) + "x" + std::to_string(ds.width));
      std::optional<ScenarioConfig> config;
      try {
        config = config_from_json(ds.config);
      } catch (const ConfigError&) {
      }
      const EvalReport report = evaluate(params, to_samples(ds));
      write_report_csv(report, config ? &*config : nullptr, ev_out);
      manifest.config_hash = config_hash({{"params_sha256", file_sha256(ev_params)}, {"dataset_sha256", file_sha256(ev_dataset)}});
      manifest.seeds = {{"params_seed", params.seed}};
      manifest.add_output(ev_out);
      manifest.write(sibling(ev_out, ".manifest.json"));
      out << "accuracy " << report.accuracy << " on " << report.total() << " samples\n";
    } else if (*sw) {
      manifest.command = "sweep";
      const ScenarioConfig config = sw_scenario.resolve();
      ExperimentOptions o;
      o.per_class = sw_per_class;
      o.threads = threads;
      o.sweep_subset = sw_points;
      o.train = load_train_config(sw_train_config);
      if (sw_train_seed) o.train.seed = *sw_train_seed;
      if (sw_epochs) o.train.epochs = *sw_epochs;
      o.split_seed = o.train.seed;
      if (!sw_mode.empty()) o.mode = sw_mode == "joint" ? TrainMode::joint : TrainMode::per_point;
      o.arch = pick_arch(sw_arch, config.target_height, config.target_width);
      o.out_dir = sw_out;
      o.log = log;
      const DigitSet digits = load_digits(digits_dir);
      const ExperimentResult r = run_experiment(config, digits, o);
      manifest.config_hash = config_hash({{"scenario", to_json(config)}, {"train", to_json(o.train)},
                                          {"per_class", o.per_class}, {"mode", to_string(r.mode)},
                                          {"arch", to_json(*o.arch)}});
      manifest.seeds = {{"master_seed", config.master_seed}, {"train_seed", o.train.seed}, {"split_seed", o.split_seed}};
      const fs::path mpath = sw_out / "manifest.json";
      list_dir_outputs(manifest, sw_out, mpath);
      manifest.write(mpath);
      out << "sweep_value,accuracy,mode\n";
      for (const auto& row : r.rows) out << row.sweep_value << ',' << row.accuracy << ',' << to_string(row.mode) << '\n';
    } else if (*rd) {
      manifest.command = "render";
      const SpeckleDataset ds = load_dataset(rd_dataset);
      for (long long i : rd_indices)
        if (i < 0 || i >= static_cast<long long>(ds.size()))
          throw UsageError("sample index " + std::to_string(i) + " out of range [0, " + std::to_string(ds.size()) + ")");
      fs::create_directories(rd_out);
      for (long long i : rd_indices) {
        const auto k = static_cast<std::size_t>(i);
        char name[96];
        std::snprintf(name, sizeof name, "sample%06lld_label%d_sweep%d.pgm", i, ds.labels[k], ds.sweep_index[k]);
        write_pgm(ds.image(k), ds.width, ds.height, rd_out / name);
        manifest.add_output(rd_out / name);
      }
      manifest.config_hash = config_hash({{"dataset_sha256", file_sha256(rd_dataset)}});
      manifest.write(rd_out / "manifest.json");
      out << "wrote " << rd_indices.size() << " images to " << rd_out.string() << '\n';
    }
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    err << "error: " << e.what() << '\n';
    return code;
  }
  return kExitOk;
}

}  // namespace speckle::cli
