#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "speckle/idx.hpp"
#include "speckle/optics.hpp"

namespace speckle {

enum class ScenarioKind { focus_sweep, aperture_sweep, nlos, incoherent_baseline };
enum class Illumination { coherent, incoherent };
enum class SweepParameter { distance, aperture };
enum class Normalization { standardize, quantize };

/// One optical element in a scenario, positioned by its distance in front of the sensor.
/// An aperture with plane_from_sensor == 0 is a sensor window: the sensor records only the
/// aperture area, sampled by its full pixel count.
struct ElementSpec {
  enum class Type { aperture, lens, phase_screen };
  Type type = Type::aperture;
  double plane_from_sensor = 0.0;
  ApertureShape shape = ApertureShape::square;
  double size = 0.0;
  std::array<double, 2> offset{0.0, 0.0};
  double focal_length = 0.0;
  double correlation_length = 0.0;
  std::uint64_t seed = 0;
  /// The swept aperture takes its size from the sweep point.
  bool swept = false;
};

struct DiffuserSpec {
  double correlation_length = 0.0;
  std::uint64_t seed = 0;
};

/// Mapping between lab-scale and desk-scale quantities (metadata only).
struct ScaleInfo {
  double base_fresnel_number = 0.0;
  double lab_object_size = 0.0;  // m
  double desk_unit_distance = 0.0;  // desk metres per lab metre along the axis
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::focus_sweep;
  Illumination illumination = Illumination::coherent;
  double wavelength = 0.0;
  int grid_size = 0;
  double pitch = 0.0;
  double object_size = 0.0;
  std::optional<DiffuserSpec> diffuser;
  int sensor_width = 0;
  int sensor_height = 0;
  double sensor_pitch = 0.0;
  /// Object-to-sensor distance for sweeps that do not vary it.
  double object_to_sensor = 0.0;
  SweepParameter sweep_parameter = SweepParameter::distance;
  std::vector<double> sweep_values;  // metres: distance or aperture size
  std::vector<double> lab_values;  // lab metres, or multiples of D_min for apertures
  double feature_size = 0.0;         // Delta x
  double diffraction_limit = 0.0;    // D_min
  std::optional<int> threshold_index;
  std::vector<ElementSpec> elements;
  int target_width = 32;
  int target_height = 32;
  Normalization normalization = Normalization::standardize;
  int bits = 16;
  std::uint64_t master_seed = 1;
  ScaleInfo scale;

  void validate() const;
  GridSpec grid() const { return {grid_size, grid_size, pitch, wavelength}; }
};

nlohmann::json to_json(const ScenarioConfig& config);
/// Strict parse: unknown or missing keys and bad values raise ConfigError naming the JSON path.
ScenarioConfig config_from_json(const nlohmann::json& j);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Desk-scale stand-in for the lab bench: pitch = wavelength, object of object_pixels,
/// 1 m analog at the distance where the object's Fresnel number equals base_fresnel_number.
struct DeskScale {
  double wavelength = 632.8e-9;
  int grid_size = 256;
  int object_pixels = 64;
  int sensor_pixels = 128;
  int target_pixels = 32;
  double base_fresnel_number = 16.0;
  double lab_object_size = 0.028;

  double pitch() const { return wavelength; }
  double object_size() const { return object_pixels * pitch(); }
  /// Desk distance standing in for 1 m.
  double unit_distance() const;
};

struct FocusSweepParams {
  DeskScale desk;
  Illumination illumination = Illumination::coherent;
  std::vector<double> lab_distances{1, 2, 3, 4, 5, 6, 7, 8};
  std::optional<DiffuserSpec> diffuser = DiffuserSpec{0.0, 1234};
  /// Incoherent camera: lens-to-sensor distance as a fraction of the 1 m analog, and the stop
  /// diameter as a fraction of the lens-to-sensor distance.
  double image_distance_fraction = 0.5;
  double stop_fraction = 0.75;
  double lab_focus_distance = 1.0;
  std::uint64_t master_seed = 1;
};

struct ApertureSweepParams {
  DeskScale desk{632.8e-9, 256, 128, 128, 32, 16.0, 0.028};
  Illumination illumination = Illumination::coherent;
  /// Aperture sizes in units of D_min.
  std::vector<double> multiples{10.0, 3.1622776601683795, 1.0, 0.31622776601683794, 0.1,
                                0.031622776601683791, 0.01};
  double lab_distance = 1.0;
  std::optional<DiffuserSpec> diffuser = DiffuserSpec{0.0, 1234};
  int window_pixels = 32;
  std::uint64_t master_seed = 1;
};

struct NlosParams {
  DeskScale desk;
  double lab_object_to_wall = 1.0;
  double lab_wall_to_sensor = 1.0;
  double wall_correlation_length = 0.0;
  std::uint64_t wall_seed = 99;
  std::optional<DiffuserSpec> diffuser;
  std::uint64_t master_seed = 1;
};

ScenarioConfig build_focus_sweep(const FocusSweepParams& params = {});
ScenarioConfig build_aperture_sweep(const ApertureSweepParams& params = {});
ScenarioConfig build_nlos(const NlosParams& params = {});
/// Incoherent lensless counterpart of the focus sweep, quantized to 16 bits. Distances keep the
/// lab distance-to-object ratio rather than its Fresnel number.
ScenarioConfig build_incoherent_baseline(const FocusSweepParams& params = {});

/// Optical chain for one sweep point, ready to image digits. Phase screens and PSFs are built
/// once; image() is safe to call concurrently.
class ScenarioRunner {
 public:
  ScenarioRunner(const ScenarioConfig& config, int sweep_index);
  const Geometry& geometry() const { return geometry_; }
  const std::vector<Element>& elements() const { return elements_; }
  /// Raw sensor intensity for one bitmap.
  IntensityImage sensor_image(const BitmapView& bitmap) const;
  /// Sensor image downsampled to the target size, then standardized or quantized.
  RealGrid image(const BitmapView& bitmap) const;
  RealGrid preprocess(const IntensityImage& sensor) const;

 private:
  ScenarioConfig config_;
  Geometry geometry_;
  std::vector<Element> elements_;
  std::optional<PhaseScreen> diffuser_;
  std::optional<IntensityImage> psf_;
  PropagationOptions propagation_;
};

struct SpeckleDataset {
  nlohmann::json config;  // embedded ScenarioConfig
  nlohmann::json provenance;
  int width = 0;
  int height = 0;
  std::optional<int> bit_depth;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint16_t> sweep_index;
  std::vector<std::uint32_t> digit_id;  // index into the source DigitSet
  std::vector<float> pixels;            // size() * width * height

  std::size_t size() const { return labels.size(); }
  std::size_t sweep_points() const;
  const float* image(std::size_t i) const { return pixels.data() + i * width * height; }
  void validate() const;
  bool operator==(const SpeckleDataset&) const = default;
};

struct GenerateOptions {
  int threads = 1;
  /// Restrict to these sweep indices (empty = all).
  std::vector<int> sweep_subset;
};

/// Picks per_class digits of each class (seeded by master_seed) and images each through every
/// sweep point. Sample order is digit-major, sweep-minor; output is independent of threads.
SpeckleDataset generate_dataset(const ScenarioConfig& config, const DigitSet& digits, int per_class,
                                const GenerateOptions& options = {});

inline constexpr std::uint32_t kDatasetVersion = 1;
std::vector<std::uint8_t> encode_dataset(const SpeckleDataset& ds);
SpeckleDataset decode_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset(const SpeckleDataset& ds, const std::filesystem::path& path);
SpeckleDataset load_dataset(const std::filesystem::path& path);

/// Split keeping all sweep points of one digit on one side, stratified by label.
std::pair<SpeckleDataset, SpeckleDataset> split(const SpeckleDataset& ds, double train_fraction,
                                                std::uint64_t seed);

/// Samples whose sweep index is in `points`, in original order.
SpeckleDataset select_sweep(const SpeckleDataset& ds, const std::vector<int>& points);

std::string to_string(ScenarioKind kind);
std::string to_string(Illumination illumination);

}  // namespace speckle
