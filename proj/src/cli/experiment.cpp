#include <algorithm>
#include <chrono>
#include <ostream>
#include <set>

#include "speckle/cli.hpp"
#include "speckle/random.hpp"

namespace speckle::cli {

namespace fs = std::filesystem;

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what(), exit_code_for(e));
  }
}

std::vector<std::uint32_t> digit_ids(const SpeckleDataset& ds) {
  std::set<std::uint32_t> ids(ds.digit_id.begin(), ds.digit_id.end());
  return {ids.begin(), ids.end()};
}

std::vector<int> points_of(const SpeckleDataset& ds) {
  std::set<int> p(ds.sweep_index.begin(), ds.sweep_index.end());
  return {p.begin(), p.end()};
}

}  // namespace

ExperimentResult run_experiment(const ScenarioConfig& config, const DigitSet& digits,
                                const ExperimentOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  auto log = [&](const std::string& msg) {
    if (!o.log) return;
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    *o.log << "[" << static_cast<long>(s) << "s] " << msg << std::endl;
  };
  stage("config", [&] { config.validate(); o.train.validate(); });
  if (!(o.train_fraction > 0.0 && o.train_fraction < 1.0))
    throw StageError("config", "train fraction must be in (0, 1)", kExitUsage);
  if (!(o.val_fraction > 0.0 && o.val_fraction < 1.0))
    throw StageError("config", "validation fraction must be in (0, 1)", kExitUsage);

  ExperimentResult result;
  result.config = config;
  result.mode = o.mode.value_or(default_mode(config));

  log("generate " + to_string(config.kind) + " (" + to_string(config.illumination) + ")");
  GenerateOptions gen;
  gen.threads = o.threads;
  gen.sweep_subset = o.sweep_subset;
  const SpeckleDataset ds = stage("generate", [&] { return generate_dataset(config, digits, o.per_class, gen); });
  if (o.out_dir) stage("generate", [&] {
      fs::create_directories(*o.out_dir);
      save_dataset(ds, *o.out_dir / "dataset.spkl");
    });

  auto [train_ds, test_ds] = stage("split", [&] { return split(ds, o.train_fraction, o.split_seed); });
  auto [fit_ds, val_ds] = stage("split", [&] {
    return split(train_ds, 1.0 - o.val_fraction, mix_seed({o.split_seed, 0x5a11d}));
  });
  result.digits = {digit_ids(fit_ds), digit_ids(val_ds), digit_ids(test_ds)};

  std::vector<std::vector<int>> groups;
  if (result.mode == TrainMode::joint) {
    groups.push_back(points_of(ds));
  } else {
    for (int p : points_of(ds)) groups.push_back({p});
  }

  const Architecture arch = o.arch.value_or(Architecture::default_cnn(ds.height, ds.width));
  std::size_t correct = 0;
  for (const auto& group : groups) {
    const std::string tag = result.mode == TrainMode::joint ? "" : "_" + std::to_string(group.front());
    const auto pick = [&](const SpeckleDataset& d) {
      return to_samples(groups.size() == 1 ? d : select_sweep(d, group));
    };
    const Samples fit = pick(fit_ds), val = pick(val_ds), test = pick(test_ds);
    log("train" + tag + " on " + std::to_string(fit.size()) + " samples");
    const TrainResult tr = stage("train", [&] {
      return train(init_network<float>(arch, o.train.seed), fit, val, o.train, [&](const EpochRecord& e) {
        log("  epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.train_loss) + " val " +
            std::to_string(e.val_acc));
      });
    });
    result.best_epochs.push_back(tr.best_epoch);
    const EvalReport rep = stage("eval", [&] { return evaluate(tr.params, test); });
    log("eval" + tag + " accuracy " + std::to_string(rep.accuracy));
    if (o.out_dir) stage("eval", [&] {
        save_params(tr.params, *o.out_dir / ("params" + tag + ".spnn"));
        write_history_csv(tr.history, *o.out_dir / ("history" + tag + ".csv"));
        write_report_csv(rep, &config, *o.out_dir / ("report" + tag + ".csv"));
      });
    for (int t = 0; t < 10; ++t)
      for (int c = 0; c < 10; ++c) result.report.confusion[t][c] += rep.confusion[t][c];
    for (const auto& s : rep.per_sweep) {
      result.report.per_sweep.push_back(s);
      correct += s.correct;
      SweepRow row;
      row.sweep_index = s.sweep_index;
      row.sweep_value = sweep_value(config, s.sweep_index);
      row.desk_value = config.sweep_values[s.sweep_index];
      row.count = s.count;
      row.accuracy = s.accuracy();
      row.mode = result.mode;
      result.rows.push_back(row);
    }
  }
  std::sort(result.report.per_sweep.begin(), result.report.per_sweep.end(),
            [](const auto& a, const auto& b) { return a.sweep_index < b.sweep_index; });
  result.report.accuracy = static_cast<double>(correct) / static_cast<double>(result.report.total());
  if (o.out_dir) stage("eval", [&] {
      write_sweep_csv(result.rows, *o.out_dir / "sweep.csv");
      write_report_csv(result.report, &config, *o.out_dir / "report.csv");
    });
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace speckle::cli
