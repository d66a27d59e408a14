#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "speckle/cli.hpp"

using namespace speckle;
using namespace speckle::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("speckle_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& name) const { return path / name; }
};

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "speckle-sense");
  args.push_back("--quiet");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

Result invoke_bare(std::vector<std::string> args) {
  args.insert(args.begin(), "speckle-sense");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

const std::string kDigits = std::string(SPECKLE_DATA_DIR) + "/mnist";

json read_json(const fs::path& p) {
  std::ifstream f(p);
  return json::parse(f);
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(f, l);) out.push_back(l);
  return out;
}

std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string c; std::getline(ss, c, ',');) out.push_back(c);
  return out;
}

/// Small focus-sweep dataset shared by several cases.
fs::path small_dataset(const TempDir& dir, const std::string& name = "ds.spkl") {
  const auto r = invoke({"generate", "--scenario", "focus_sweep", "--values", "1,4", "--per-class", "4", "--digits",
                      kDigits, "--out", (dir / name).string()});
  REQUIRE(r.code == 0);
  return dir / name;
}

}  // namespace

TEST_CASE("cli usage errors exit 2") {
  CHECK(invoke_bare({}).code == kExitUsage);
  CHECK(invoke_bare({"frobnicate"}).code == kExitUsage);
  CHECK(invoke_bare({"--help"}).code == kExitOk);
  CHECK(invoke({"generate", "--out", "x.spkl"}).code == kExitUsage);
  CHECK(invoke({"generate", "--scenario", "nope", "--out", "x.spkl"}).code == kExitUsage);
  CHECK(invoke({"generate", "--scenario", "nlos", "--values", "1,2", "--out", "x.spkl"}).code == kExitUsage);
}

TEST_CASE("cli generate rejects an unknown config key naming it") {
  TempDir dir;
  const auto dumped = invoke({"generate", "--scenario", "focus_sweep", "--dump-config"});
  REQUIRE(dumped.code == 0);
  json cfg = json::parse(dumped.out);
  CHECK(config_from_json(cfg).kind == ScenarioKind::focus_sweep);
  cfg["optics"]["colour"] = "red";
  std::ofstream(dir / "bad.json") << cfg.dump();
  const auto r = invoke({"generate", "--config", (dir / "bad.json").string(), "--out", (dir / "x.spkl").string()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("optics.colour") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "x.spkl"));

  cfg["optics"].erase("colour");
  cfg["preprocessing"]["bits"] = 0;
  std::ofstream(dir / "bad2.json") << cfg.dump();
  const auto r2 = invoke({"generate", "--config", (dir / "bad2.json").string(), "--out", (dir / "x.spkl").string()});
  CHECK(r2.code == kExitUsage);
  CHECK(r2.err.find("preprocessing.bits") != std::string::npos);
}

TEST_CASE("cli generate writes an SPKL file and a deterministic manifest") {
  TempDir dir;
  const fs::path a = small_dataset(dir, "a.spkl");
  const fs::path b = small_dataset(dir, "b.spkl");
  std::ifstream f(a, std::ios::binary);
  char magic[4];
  f.read(magic, 4);
  CHECK(std::string(magic, 4) == "SPKL");
  const json ma = read_json(dir / "a.manifest.json"), mb = read_json(dir / "b.manifest.json");
  CHECK(ma["command"] == "generate");
  REQUIRE(ma["outputs"].size() == 1);
  CHECK(ma["outputs"][0]["sha256"] == mb["outputs"][0]["sha256"]);
  CHECK(ma["outputs"][0]["sha256"] == file_sha256(a));
  CHECK(ma["config_hash"] == mb["config_hash"]);
  CHECK(ma["seeds"]["master_seed"] == 1);
  CHECK(load_dataset(a).size() == 80);

  const auto threaded = invoke({"generate", "--scenario", "focus_sweep", "--values", "1,4", "--per-class", "4",
                             "--threads", "3", "--digits", kDigits, "--out", (dir / "c.spkl").string()});
  REQUIRE(threaded.code == 0);
  CHECK(file_sha256(dir / "c.spkl") == file_sha256(a));

  const auto reseeded = invoke({"generate", "--scenario", "focus_sweep", "--values", "1,4", "--per-class", "4",
                             "--seed", "7", "--digits", kDigits, "--out", (dir / "d.spkl").string()});
  REQUIRE(reseeded.code == 0);
  CHECK(file_sha256(dir / "d.spkl") != file_sha256(a));
}

TEST_CASE("cli train writes params, history and held-out split; reruns are byte-identical") {
  TempDir dir;
  const fs::path ds = small_dataset(dir);
  auto train_to = [&](const std::string& name) {
    return invoke({"train", "--dataset", ds.string(), "--epochs", "3", "--out", (dir / name).string()});
  };
  REQUIRE(train_to("p.spnn").code == 0);
  REQUIRE(train_to("q.spnn").code == 0);
  CHECK(file_sha256(dir / "p.spnn") == file_sha256(dir / "q.spnn"));
  CHECK(file_sha256(dir / "p.test.spkl") == file_sha256(dir / "q.test.spkl"));

  const auto hist = lines(dir / "p.history.csv");
  REQUIRE(hist.size() == 4);
  CHECK(hist[0] == "epoch,train_loss,train_acc,val_acc");
  CHECK(cells(hist[3])[0] == "3");

  const json m = read_json(dir / "p.manifest.json");
  CHECK(m["outputs"].size() == 3);
  for (const auto& o : m["outputs"]) CHECK(o["sha256"] == file_sha256(o["path"].get<std::string>()));

  const SpeckleDataset full = load_dataset(ds), test = load_dataset(dir / "p.test.spkl");
  CHECK(test.size() == 20);
  CHECK(load_params(dir / "p.spnn").arch == Architecture::default_cnn(32, 32));
  (void)full;
}

TEST_CASE("cli train reports divergence with exit 3 and the epoch") {
  TempDir dir;
  const fs::path ds = small_dataset(dir);
  std::ofstream(dir / "hot.json") << R"({"learning_rate": 1e30, "momentum": 0.0, "epochs": 3})";
  const auto r = invoke({"train", "--dataset", ds.string(), "--config", (dir / "hot.json").string(), "--out",
                      (dir / "p.spnn").string()});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("diverged in epoch") != std::string::npos);

  std::ofstream(dir / "typo.json") << R"({"learnign_rate": 0.1})";
  const auto t = invoke({"train", "--dataset", ds.string(), "--config", (dir / "typo.json").string(), "--out",
                      (dir / "p.spnn").string()});
  CHECK(t.code == kExitUsage);
  CHECK(t.err.find("learnign_rate") != std::string::npos);
}

TEST_CASE("cli eval report is internally consistent") {
  TempDir dir;
  const fs::path ds = small_dataset(dir);
  REQUIRE(invoke({"train", "--dataset", ds.string(), "--epochs", "2", "--out", (dir / "p.spnn").string()}).code == 0);
  const auto r = invoke({"eval", "--params", (dir / "p.spnn").string(), "--dataset", ds.string(), "--out",
                      (dir / "rep.csv").string()});
  REQUIRE(r.code == 0);
  const auto l = lines(dir / "rep.csv");
  REQUIRE(l.size() == 19);
  CHECK(l[0] == "metric,value");
  const double accuracy = std::stod(cells(l[1])[1]);
  CHECK(cells(l[4])[0] == "true\\predicted");
  std::int64_t trace = 0, total = 0;
  const SpeckleDataset data = load_dataset(ds);
  for (int t = 0; t < 10; ++t) {
    const auto row = cells(l[5 + t]);
    REQUIRE(row.size() == 11);
    std::int64_t sum = 0;
    for (int c = 0; c < 10; ++c) sum += std::stoll(row[1 + c]);
    CHECK(sum == std::count(data.labels.begin(), data.labels.end(), t));
    trace += std::stoll(row[1 + t]);
    total += sum;
  }
  CHECK(accuracy == doctest::Approx(static_cast<double>(trace) / total));
  CHECK(l[16] == "sweep_index,sweep_value,count,correct,accuracy");
  CHECK(cells(l[17])[1] == "1");
  CHECK(cells(l[18])[1] == "4");
}

TEST_CASE("cli eval rejects mismatched dimensions with exit 2") {
  TempDir dir;
  const auto dumped = invoke({"generate", "--scenario", "nlos", "--dump-config"});
  json cfg = json::parse(dumped.out);
  cfg["preprocessing"]["target_width"] = 16;
  cfg["preprocessing"]["target_height"] = 16;
  std::ofstream(dir / "small.json") << cfg.dump();
  REQUIRE(invoke({"generate", "--config", (dir / "small.json").string(), "--per-class", "2", "--digits", kDigits,
               "--out", (dir / "small.spkl").string()})
              .code == 0);
  save_params(init_network<float>(Architecture::default_cnn(), 1), dir / "p.spnn");
  const auto r = invoke({"eval", "--params", (dir / "p.spnn").string(), "--dataset", (dir / "small.spkl").string(),
                      "--out", (dir / "rep.csv").string()});
  CHECK(r.code == kExitUsage);
  CHECK_FALSE(fs::exists(dir / "rep.csv"));
}

TEST_CASE("cli render writes one P5 file per index") {
  TempDir dir;
  const fs::path ds = small_dataset(dir);
  const auto r = invoke({"render", "--dataset", ds.string(), "--indices", "0,3,79", "--out", (dir / "img").string()});
  REQUIRE(r.code == 0);
  int pgms = 0;
  for (const auto& e : fs::directory_iterator(dir / "img")) pgms += e.path().extension() == ".pgm";
  CHECK(pgms == 3);
  const fs::path last = dir / "img" / "sample000079_label9_sweep1.pgm";
  REQUIRE(fs::exists(last));
  std::ifstream f(last, std::ios::binary);
  std::string magic(2, '\0');
  f.read(magic.data(), 2);
  CHECK(magic == "P5");
  CHECK(fs::file_size(last) == std::string("P5\n32 32\n255\n").size() + 32 * 32);
  CHECK(read_json(dir / "img" / "manifest.json")["outputs"].size() == 3);

  CHECK(invoke({"render", "--dataset", ds.string(), "--indices", "80", "--out", (dir / "bad").string()}).code ==
        kExitUsage);
  CHECK(invoke({"render", "--dataset", ds.string(), "--indices", "-1", "--out", (dir / "bad").string()}).code ==
        kExitUsage);
}

TEST_CASE("gray8 scaling") {
  const std::vector<float> flat(16, 3.5f);
  for (auto v : to_gray8(flat.data(), flat.size())) CHECK(v == 128);
  const std::vector<float> ramp{-1.0f, 0.0f, 1.0f};
  CHECK(to_gray8(ramp.data(), 3) == std::vector<std::uint8_t>{0, 128, 255});
  TempDir dir;
  write_pgm(flat.data(), 4, 4, dir / "flat.pgm");
  const auto bytes = [&] {
    std::ifstream f(dir / "flat.pgm", std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  }();
  CHECK(bytes.substr(0, 11) == "P5\n4 4\n255\n");
  for (std::size_t i = 11; i < bytes.size(); ++i) CHECK(static_cast<unsigned char>(bytes[i]) == 128);
}

TEST_CASE("cli sweep modes and axis units") {
  TempDir dir;
  SUBCASE("coherent focus sweep trains one network") {
    const auto r = invoke({"sweep", "--scenario", "focus_sweep", "--values", "1,4", "--per-class", "4", "--epochs", "2",
                        "--digits", kDigits, "--out", (dir / "f").string()});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "f" / "params.spnn"));
    CHECK_FALSE(fs::exists(dir / "f" / "params_0.spnn"));
    const auto l = lines(dir / "f" / "sweep.csv");
    REQUIRE(l.size() == 3);
    CHECK(l[0].rfind("sweep_value,accuracy,mode", 0) == 0);
    CHECK(cells(l[1])[0] == "1");
    CHECK(cells(l[2])[0] == "4");
    CHECK(cells(l[1])[2] == "joint");
    const json m = read_json(dir / "f" / "manifest.json");
    for (const auto& o : m["outputs"]) CHECK(o["sha256"] == file_sha256(o["path"].get<std::string>()));
  }
  SUBCASE("incoherent focus sweep trains one network per point") {
    const auto r = invoke({"sweep", "--scenario", "focus_sweep", "--illumination", "incoherent", "--values", "1,4",
                        "--per-class", "4", "--epochs", "1", "--digits", kDigits, "--out", (dir / "i").string()});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "i" / "params_0.spnn"));
    CHECK(fs::exists(dir / "i" / "params_1.spnn"));
    CHECK(cells(lines(dir / "i" / "sweep.csv")[1])[2] == "per_point");
  }
  SUBCASE("aperture sweep values are in units of the diffraction limit") {
    const auto r = invoke({"sweep", "--scenario", "aperture_sweep", "--values", "1,0.1", "--per-class", "4",
                        "--epochs", "1", "--digits", kDigits, "--out", (dir / "a").string()});
    REQUIRE(r.code == 0);
    const auto l = lines(dir / "a" / "sweep.csv");
    REQUIRE(l.size() == 3);
    CHECK(std::stod(cells(l[1])[0]) == doctest::Approx(1.0));
    CHECK(std::stod(cells(l[2])[0]) == doctest::Approx(0.1));
    const ScenarioConfig c = build_aperture_sweep();
    CHECK(sweep_value(c, 2) == doctest::Approx(1.0));
    CHECK(c.sweep_values[2] == doctest::Approx(c.diffraction_limit));
  }
  SUBCASE("stage errors are labelled") {
    const auto r = invoke({"sweep", "--scenario", "focus_sweep", "--values", "1", "--per-class", "4", "--digits",
                        (dir / "missing").string(), "--out", (dir / "e").string()});
    CHECK(r.code == kExitRuntime);
    CHECK(r.err.find("digits:") != std::string::npos);
  }
}

TEST_CASE("run_experiment keeps digit identities disjoint") {
  const DigitSet digits = load_idx_dir(kDigits);
  ExperimentOptions o;
  o.per_class = 6;
  o.train.epochs = 1;
  FocusSweepParams p;
  p.lab_distances = {1, 2};
  const ExperimentResult r = run_experiment(build_focus_sweep(p), digits, o);
  CHECK(r.mode == TrainMode::joint);
  CHECK(r.rows.size() == 2);
  CHECK(r.report.total() == r.digits.test.size() * 2);
  std::vector<std::uint32_t> all;
  for (const auto* s : {&r.digits.fit, &r.digits.validation, &r.digits.test}) all.insert(all.end(), s->begin(), s->end());
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  CHECK(all.size() == 60);
}

TEST_CASE("manifest sibling paths") {
  CHECK(sibling("out/ds.spkl", ".manifest.json") == fs::path("out/ds.manifest.json"));
  CHECK(sibling("p", ".history.csv") == fs::path("p.history.csv"));
}
