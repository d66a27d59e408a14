#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "speckle/learn.hpp"
#include "speckle/synth.hpp"

namespace speckle::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Bad invocation or incompatible inputs; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Failure inside one stage of an orchestrated command, carrying the exit code of the cause.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what, int exit_code)
      : Error(stage + ": " + what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

struct OutputRecord {
  std::filesystem::path path;
  std::uintmax_t bytes = 0;
  std::string sha256;  // lowercase hex
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  nlohmann::json seeds = nlohmann::json::object();
  std::string started;
  std::string finished;
  std::vector<OutputRecord> outputs;

  /// Records an already written file with its checksum.
  void add_output(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// Stamps `finished` and writes the manifest; the manifest does not list itself.
  void write(const std::filesystem::path& path);
};

std::string utc_timestamp();
std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);
/// SHA-256 of the compact JSON dump.
std::string config_hash(const nlohmann::json& config);

/// `foo/bar.spkl` + ".manifest.json" -> `foo/bar.manifest.json`.
std::filesystem::path sibling(const std::filesystem::path& path, const std::string& suffix);

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);
/// Overall accuracy, the 10x10 confusion block and the per-sweep table, as blank-line separated
/// CSV blocks, each with its own header row.
void write_report_csv(const EvalReport& report, const ScenarioConfig* config, const std::filesystem::path& path);
/// Binary PGM, min-max scaled to 0..255; a constant image is written as all 128.
void write_pgm(const float* pixels, int width, int height, const std::filesystem::path& path);
std::vector<std::uint8_t> to_gray8(const float* pixels, std::size_t count);

/// Reported value of a sweep point: lab distance in m, aperture in units of D_min.
double sweep_value(const ScenarioConfig& config, int sweep_index);

enum class TrainMode { joint, per_point };
std::string to_string(TrainMode mode);
/// One network for all points for coherent focus sweeps and NLOS, one per point otherwise.
TrainMode default_mode(const ScenarioConfig& config);

struct ExperimentOptions {
  int per_class = 512;
  int threads = 1;
  std::vector<int> sweep_subset;
  double train_fraction = 0.8;
  /// Fraction of the training digits held out for early stopping.
  double val_fraction = 0.1;
  std::uint64_t split_seed = 1;
  TrainConfig train;
  std::optional<TrainMode> mode;
  std::optional<Architecture> arch;  // default_cnn at the dataset size
  /// When set, the dataset, params, histories and eval reports are written here.
  std::optional<std::filesystem::path> out_dir;
  std::ostream* log = nullptr;
};

struct SweepRow {
  int sweep_index = 0;
  double sweep_value = 0.0;
  double desk_value = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;
  TrainMode mode = TrainMode::joint;
};

struct DigitSplit {
  std::vector<std::uint32_t> fit, validation, test;  // sorted unique digit ids
};

struct ExperimentResult {
  ScenarioConfig config;
  TrainMode mode = TrainMode::joint;
  std::vector<SweepRow> rows;
  EvalReport report;  // all test samples, pooled over networks
  DigitSplit digits;
  std::vector<int> best_epochs;  // one per network
  double seconds = 0.0;
};

/// generate -> split by digit -> train -> eval. Errors are rethrown as StageError.
ExperimentResult run_experiment(const ScenarioConfig& config, const DigitSet& digits,
                                const ExperimentOptions& options);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

/// Runs `speckle-sense` with argv-style arguments (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace speckle::cli
