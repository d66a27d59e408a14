#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "../bytes.hpp"
#include "speckle/random.hpp"
#include "speckle/synth.hpp"

namespace speckle {

using nlohmann::json;

inline constexpr const char* kGeneratorVersion = "speckle-sense synth 1.0";

std::size_t SpeckleDataset::sweep_points() const {
  if (config.is_object() && config.contains("sweep")) return config["sweep"]["values"].size();
  std::size_t n = 0;
  for (auto s : sweep_index) n = std::max<std::size_t>(n, s + 1u);
  return n;
}

void SpeckleDataset::validate() const {
  const std::size_t n = labels.size();
  if (sweep_index.size() != n || digit_id.size() != n)
    throw LengthError("dataset label, sweep and digit arrays differ in length");
  if (n > 0 && (width < 1 || height < 1)) throw ArgumentError("dataset image dimensions must be >= 1");
  if (pixels.size() != n * static_cast<std::size_t>(width) * height)
    throw LengthError("dataset pixel payload does not match sample count");
  for (auto l : labels)
    if (l > 9) throw ArgumentError("dataset label out of range");
  if (bit_depth) {
    if (*bit_depth < 1 || *bit_depth > 16) throw ArgumentError("bit depth must be in [1, 16]");
    const float top = static_cast<float>(std::ldexp(1.0, *bit_depth) - 1.0);
    for (float v : pixels)
      if (!(v >= 0.0f && v <= top) || v != std::round(v))
        throw ArgumentError("quantized pixel outside [0, 2^bits - 1]");
  }
}

namespace {

/// per_class digit indices per class, each class shuffled by its own seeded stream; returned
/// interleaved by class (0..9, 0..9, ...).
std::vector<std::uint32_t> select_digits(const DigitSet& digits, int per_class, std::uint64_t seed) {
  std::array<std::vector<std::uint32_t>, 10> by_class;
  for (int i = 0; i < digits.count; ++i) by_class[digits.labels[i]].push_back(static_cast<std::uint32_t>(i));
  for (int c = 0; c < 10; ++c) {
    if (static_cast<int>(by_class[c].size()) < per_class)
      throw ArgumentError("class " + std::to_string(c) + " has fewer than " +
                          std::to_string(per_class) + " digits");
    Rng rng(mix_seed({seed, 0x5e1ec7ULL, static_cast<std::uint64_t>(c)}));
    rng.shuffle(by_class[c]);
  }
  std::vector<std::uint32_t> out;
  out.reserve(static_cast<std::size_t>(per_class) * 10);
  for (int k = 0; k < per_class; ++k)
    for (int c = 0; c < 10; ++c) out.push_back(by_class[c][k]);
  return out;
}

SpeckleDataset subset(const SpeckleDataset& ds, const std::vector<std::size_t>& rows) {
  SpeckleDataset out;
  out.config = ds.config;
  out.provenance = ds.provenance;
  out.width = ds.width;
  out.height = ds.height;
  out.bit_depth = ds.bit_depth;
  const std::size_t px = static_cast<std::size_t>(ds.width) * ds.height;
  out.pixels.reserve(rows.size() * px);
  for (std::size_t r : rows) {
    out.labels.push_back(ds.labels[r]);
    out.sweep_index.push_back(ds.sweep_index[r]);
    out.digit_id.push_back(ds.digit_id[r]);
    out.pixels.insert(out.pixels.end(), ds.image(r), ds.image(r) + px);
  }
  return out;
}

}  // namespace

SpeckleDataset generate_dataset(const ScenarioConfig& config, const DigitSet& digits, int per_class,
                                const GenerateOptions& options) {
  config.validate();
  if (digits.count == 0) throw ArgumentError("digit set is empty");
  digits.validate();
  if (per_class < 1 || per_class * 10 > digits.count)
    throw ArgumentError("per_class must be in [1, digits / 10]");

  std::vector<int> points = options.sweep_subset;
  if (points.empty())
    for (int i = 0; i < static_cast<int>(config.sweep_values.size()); ++i) points.push_back(i);
  for (int p : points)
    if (p < 0 || p >= static_cast<int>(config.sweep_values.size()))
      throw ArgumentError("sweep subset index out of range");

  std::vector<ScenarioRunner> runners;
  runners.reserve(points.size());
  for (int p : points) {
    try {
      runners.emplace_back(config, p);
    } catch (const GeometryError& e) {
      throw GeometryError("sweep point " + std::to_string(p) + ": " + e.what());
    }
  }

  const std::vector<std::uint32_t> chosen = select_digits(digits, per_class, config.master_seed);
  SpeckleDataset ds;
  ds.config = to_json(config);
  ds.width = config.target_width;
  ds.height = config.target_height;
  if (config.normalization == Normalization::quantize) ds.bit_depth = config.bits;
  const std::size_t count = chosen.size() * points.size();
  const std::size_t px = static_cast<std::size_t>(ds.width) * ds.height;
  ds.labels.resize(count);
  ds.sweep_index.resize(count);
  ds.digit_id.resize(count);
  ds.pixels.resize(count * px);
  ds.provenance = {{"generator", kGeneratorVersion},
                   {"master_seed", config.master_seed},
                   {"per_class", per_class},
                   {"source_digits", digits.count}};

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i; !failed && (i = next++) < count;) {
      const std::size_t d = i / points.size(), s = i % points.size();
      const std::uint32_t id = chosen[d];
      try {
        const RealGrid img = runners[s].image(digits.bitmap(static_cast<int>(id)));
        std::transform(img.data(), img.data() + px, ds.pixels.begin() + i * px,
                       [](double v) { return static_cast<float>(v); });
      } catch (const GeometryError& e) {
        std::lock_guard lock(error_mutex);
        if (!error)
          error = std::make_exception_ptr(GeometryError("digit " + std::to_string(id) + ", sweep point " +
                                                        std::to_string(points[s]) + ": " + e.what()));
        failed = true;
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
      ds.labels[i] = digits.labels[id];
      ds.sweep_index[i] = static_cast<std::uint16_t>(points[s]);
      ds.digit_id[i] = id;
    }
  };
  int threads = options.threads > 0 ? options.threads
                                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = static_cast<int>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  return ds;
}

std::vector<std::uint8_t> encode_dataset(const SpeckleDataset& ds) {
  ds.validate();
  json header{{"config", ds.config},
              {"provenance", ds.provenance},
              {"width", ds.width},
              {"height", ds.height},
              {"bit_depth", ds.bit_depth ? json(*ds.bit_depth) : json(nullptr)},
              {"count", ds.size()},
              {"digit_ids", ds.digit_id}};
  const std::string text = header.dump();
  bytes::Writer w;
  w.put(std::string_view("SPKL"));
  w.put(kDatasetVersion);
  w.put(static_cast<std::uint64_t>(text.size()));
  w.put(std::string_view(text));
  const std::size_t px = static_cast<std::size_t>(ds.width) * ds.height;
  std::vector<std::uint16_t> words(px);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    w.put(ds.labels[i]);
    w.put(ds.sweep_index[i]);
    if (ds.bit_depth) {
      std::transform(ds.image(i), ds.image(i) + px, words.begin(),
                     [](float v) { return static_cast<std::uint16_t>(v); });
      w.put_array(words.data(), px);
    } else {
      w.put_array(ds.image(i), px);
    }
  }
  return w.finish();
}

SpeckleDataset decode_dataset(const std::vector<std::uint8_t>& data) {
  bytes::Reader r = bytes::open_container(data, "SPKL", kDatasetVersion);
  const auto header_size = r.get<std::uint64_t>();
  if (header_size > r.remaining()) throw CorruptionError("header length exceeds file size");
  json header;
  try {
    header = json::parse(r.get_string(static_cast<std::size_t>(header_size)));
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("invalid dataset header: ") + e.what());
  }
  SpeckleDataset ds;
  std::size_t count = 0;
  try {
    ds.config = header.at("config");
    ds.provenance = header.at("provenance");
    ds.width = header.at("width").get<int>();
    ds.height = header.at("height").get<int>();
    if (!header.at("bit_depth").is_null()) ds.bit_depth = header.at("bit_depth").get<int>();
    count = header.at("count").get<std::size_t>();
    ds.digit_id = header.at("digit_ids").get<std::vector<std::uint32_t>>();
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("incomplete dataset header: ") + e.what());
  }
  if (ds.width < 0 || ds.height < 0 || ds.digit_id.size() != count)
    throw CorruptionError("inconsistent dataset header");
  const std::size_t px = static_cast<std::size_t>(ds.width) * ds.height;
  const std::size_t record = 3 + px * (ds.bit_depth ? 2 : 4);
  if (count != 0 && r.remaining() / count != record)
    throw CorruptionError("record payload does not match header");
  if (r.remaining() != count * record) throw CorruptionError("record payload does not match header");
  ds.labels.resize(count);
  ds.sweep_index.resize(count);
  ds.pixels.resize(count * px);
  std::vector<std::uint16_t> words(px);
  for (std::size_t i = 0; i < count; ++i) {
    ds.labels[i] = r.get<std::uint8_t>();
    ds.sweep_index[i] = r.get<std::uint16_t>();
    float* out = ds.pixels.data() + i * px;
    if (ds.bit_depth) {
      r.get_array(words.data(), px);
      std::copy(words.begin(), words.end(), out);
    } else {
      r.get_array(out, px);
    }
  }
  try {
    ds.validate();
  } catch (const Error& e) {
    throw CorruptionError(std::string("invalid dataset contents: ") + e.what());
  }
  return ds;
}

void save_dataset(const SpeckleDataset& ds, const std::filesystem::path& path) {
  bytes::write_file(path, encode_dataset(ds));
}

SpeckleDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(bytes::read_file(path));
}

std::pair<SpeckleDataset, SpeckleDataset> split(const SpeckleDataset& ds, double train_fraction,
                                                std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ArgumentError("train fraction must be in (0, 1)");
  ds.validate();
  std::array<std::vector<std::uint32_t>, 10> ids;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& v = ids[ds.labels[i]];
    if (std::find(v.begin(), v.end(), ds.digit_id[i]) == v.end()) v.push_back(ds.digit_id[i]);
  }
  std::map<std::uint32_t, bool> in_train;
  for (int c = 0; c < 10; ++c) {
    auto& v = ids[c];
    if (v.empty()) continue;
    if (v.size() < 2)
      throw SplitError("class " + std::to_string(c) + " has fewer than 2 digits to split");
    Rng rng(mix_seed({seed, 0x5b117ULL, static_cast<std::uint64_t>(c)}));
    rng.shuffle(v);
    const auto n = static_cast<std::ptrdiff_t>(v.size());
    const std::ptrdiff_t n_train =
        std::clamp<std::ptrdiff_t>(std::llround(train_fraction * static_cast<double>(n)), 1, n - 1);
    for (std::ptrdiff_t k = 0; k < n; ++k) in_train[v[k]] = k < n_train;
  }
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    (in_train.at(ds.digit_id[i]) ? train_rows : test_rows).push_back(i);
  return {subset(ds, train_rows), subset(ds, test_rows)};
}

SpeckleDataset select_sweep(const SpeckleDataset& ds, const std::vector<int>& points) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (std::find(points.begin(), points.end(), ds.sweep_index[i]) != points.end()) rows.push_back(i);
  return subset(ds, rows);
}

}  // namespace speckle
