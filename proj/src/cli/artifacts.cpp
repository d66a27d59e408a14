#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "../bytes.hpp"
#include "speckle/cli.hpp"

namespace speckle::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_text(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << std::setprecision(10);
  return f;
}

void close_text(std::ofstream& f, const fs::path& path) {
  f.close();
  if (!f) throw Error("write failed: " + path.string());
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (const auto* s = dynamic_cast<const StageError*>(&e)) return s->exit_code();
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
  return kExitRuntime;
}

std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr)) throw Error("sha256 failed");
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    out += buf;
  }
  return out;
}

std::string file_sha256(const fs::path& path) {
  const auto data = bytes::read_file(path);
  return sha256_hex({reinterpret_cast<const char*>(data.data()), data.size()});
}

std::string config_hash(const json& config) { return sha256_hex(config.dump()); }

fs::path sibling(const fs::path& path, const std::string& suffix) {
  fs::path out = path;
  out.replace_extension();
  out += suffix;
  return out;
}

void RunManifest::add_output(const fs::path& path) {
  OutputRecord r;
  r.path = path;
  r.bytes = fs::file_size(path);
  r.sha256 = file_sha256(path);
  outputs.push_back(std::move(r));
}

json RunManifest::to_json() const {
  json outs = json::array();
  for (const auto& o : outputs)
    outs.push_back({{"path", o.path.string()}, {"bytes", o.bytes}, {"sha256", o.sha256}});
  return {{"command", command}, {"config_hash", config_hash}, {"seeds", seeds},
          {"started", started}, {"finished", finished},       {"outputs", outs}};
}

void RunManifest::write(const fs::path& path) {
  finished = utc_timestamp();
  std::ofstream f = open_text(path);
  f << to_json().dump(2) << '\n';
  close_text(f, path);
}

void write_history_csv(const std::vector<EpochRecord>& history, const fs::path& path) {
  std::ofstream f = open_text(path);
  f << "epoch,train_loss,train_acc,val_acc\n";
  for (const auto& r : history)
    f << r.epoch << ',' << r.train_loss << ',' << r.train_acc << ',' << r.val_acc << '\n';
  close_text(f, path);
}

void write_report_csv(const EvalReport& report, const ScenarioConfig* config, const fs::path& path) {
  std::ofstream f = open_text(path);
  f << "metric,value\n";
  f << "accuracy," << report.accuracy << '\n';
  f << "samples," << report.total() << "\n\n";
  f << "true\\predicted";
  for (int c = 0; c < 10; ++c) f << ',' << c;
  f << '\n';
  for (int t = 0; t < 10; ++t) {
    f << t;
    for (int c = 0; c < 10; ++c) f << ',' << report.confusion[t][c];
    f << '\n';
  }
  f << "\nsweep_index,sweep_value,count,correct,accuracy\n";
  for (const auto& s : report.per_sweep) {
    f << s.sweep_index << ',';
    if (config) f << sweep_value(*config, s.sweep_index);
    f << ',' << s.count << ',' << s.correct << ',' << s.accuracy() << '\n';
  }
  close_text(f, path);
}

std::vector<std::uint8_t> to_gray8(const float* pixels, std::size_t count) {
  std::vector<std::uint8_t> out(count, 128);
  if (count == 0) return out;
  const auto [lo, hi] = std::minmax_element(pixels, pixels + count);
  const double range = static_cast<double>(*hi) - *lo;
  if (!(range > 0.0) || !std::isfinite(range)) return out;
  for (std::size_t i = 0; i < count; ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (pixels[i] - *lo) / range));
  return out;
}

void write_pgm(const float* pixels, int width, int height, const fs::path& path) {
  const auto gray = to_gray8(pixels, static_cast<std::size_t>(width) * height);
  std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> data(header.begin(), header.end());
  data.insert(data.end(), gray.begin(), gray.end());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  bytes::write_file(path, data);
}

double sweep_value(const ScenarioConfig& config, int sweep_index) {
  if (sweep_index < 0 || sweep_index >= static_cast<int>(config.sweep_values.size()))
    throw ArgumentError("sweep index " + std::to_string(sweep_index) + " out of range");
  if (config.lab_values.size() == config.sweep_values.size()) return config.lab_values[sweep_index];
  if (config.sweep_parameter == SweepParameter::aperture && config.diffraction_limit > 0.0)
    return config.sweep_values[sweep_index] / config.diffraction_limit;
  return config.sweep_values[sweep_index];
}

std::string to_string(TrainMode mode) { return mode == TrainMode::joint ? "joint" : "per_point"; }

TrainMode default_mode(const ScenarioConfig& config) {
  if (config.illumination == Illumination::incoherent) return TrainMode::per_point;
  if (config.kind == ScenarioKind::aperture_sweep) return TrainMode::per_point;
  return TrainMode::joint;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const fs::path& path) {
  std::ofstream f = open_text(path);
  f << "sweep_value,accuracy,mode,sweep_index,desk_value,count\n";
  for (const auto& r : rows)
    f << r.sweep_value << ',' << r.accuracy << ',' << to_string(r.mode) << ',' << r.sweep_index << ','
      << r.desk_value << ',' << r.count << '\n';
  close_text(f, path);
}

}  // namespace speckle::cli
