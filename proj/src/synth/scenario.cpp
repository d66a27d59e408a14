#include <algorithm>
#include <cmath>

#include "speckle/synth.hpp"

namespace speckle {

double DeskScale::unit_distance() const {
  const double half = 0.5 * object_size();
  return half * half / (wavelength * base_fresnel_number);
}

namespace {

ScenarioConfig desk_base(const DeskScale& desk) {
  ScenarioConfig c;
  c.wavelength = desk.wavelength;
  c.grid_size = desk.grid_size;
  c.pitch = desk.pitch();
  c.object_size = desk.object_size();
  c.sensor_width = c.sensor_height = desk.sensor_pixels;
  c.sensor_pitch = desk.pitch();
  c.target_width = c.target_height = desk.target_pixels;
  c.feature_size = c.object_size / 10.0;
  c.scale = {desk.base_fresnel_number, desk.lab_object_size, desk.unit_distance()};
  return c;
}

bool is_window(const ElementSpec& e) {
  return e.type == ElementSpec::Type::aperture && e.plane_from_sensor == 0.0;
}

}  // namespace

ScenarioConfig build_focus_sweep(const FocusSweepParams& p) {
  if (p.lab_distances.empty()) throw ArgumentError("focus sweep needs at least one distance");
  ScenarioConfig c = desk_base(p.desk);
  c.kind = ScenarioKind::focus_sweep;
  c.illumination = p.illumination;
  c.sweep_parameter = SweepParameter::distance;
  const double unit = p.desk.unit_distance();
  for (double d : p.lab_distances) c.sweep_values.push_back(d * unit);
  c.lab_values = p.lab_distances;
  c.diffraction_limit = diffraction_limit(c.wavelength, unit, c.feature_size);
  c.master_seed = p.master_seed;
  if (p.illumination == Illumination::coherent) {
    c.diffuser = p.diffuser;
  } else {
    // Camera focused at the fixed focus distance.
    const double focus = p.lab_focus_distance * unit;
    const double image = p.image_distance_fraction * unit;
    ElementSpec stop;
    stop.type = ElementSpec::Type::aperture;
    stop.shape = ApertureShape::circular;
    stop.plane_from_sensor = image;
    stop.size = p.stop_fraction * image;
    ElementSpec lens;
    lens.type = ElementSpec::Type::lens;
    lens.plane_from_sensor = image;
    lens.focal_length = 1.0 / (1.0 / (focus - image) + 1.0 / image);
    c.elements = {stop, lens};
  }
  c.validate();
  return c;
}

ScenarioConfig build_aperture_sweep(const ApertureSweepParams& p) {
  if (p.multiples.empty()) throw ArgumentError("aperture sweep needs at least one aperture size");
  ScenarioConfig c = desk_base(p.desk);
  c.kind = ScenarioKind::aperture_sweep;
  c.illumination = p.illumination;
  c.sweep_parameter = SweepParameter::aperture;
  c.master_seed = p.master_seed;
  const double distance = p.lab_distance * p.desk.unit_distance();
  c.diffraction_limit = diffraction_limit(c.wavelength, distance, c.feature_size);
  for (std::size_t i = 0; i < p.multiples.size(); ++i) {
    c.sweep_values.push_back(p.multiples[i] * c.diffraction_limit);
    if (std::abs(p.multiples[i] - 1.0) < 1e-9) c.threshold_index = static_cast<int>(i);
  }
  c.lab_values = p.multiples;

  ElementSpec aperture;
  aperture.type = ElementSpec::Type::aperture;
  aperture.swept = true;
  if (p.illumination == Illumination::coherent) {
    // The aperture is the sensor: a window of window_pixels^2 at distance L.
    c.diffuser = p.diffuser;
    c.object_to_sensor = distance;
    aperture.shape = ApertureShape::square;
    aperture.plane_from_sensor = 0.0;
    c.sensor_width = c.sensor_height = p.window_pixels;
    c.sensor_pitch = 0.0;
    c.target_width = std::min(c.target_width, p.window_pixels);
    c.target_height = std::min(c.target_height, p.window_pixels);
    c.elements = {aperture};
  } else {
    // Aperture on a lens at L, object in focus at unit magnification.
    c.object_to_sensor = 2.0 * distance;
    aperture.shape = ApertureShape::circular;
    aperture.plane_from_sensor = distance;
    ElementSpec lens;
    lens.type = ElementSpec::Type::lens;
    lens.plane_from_sensor = distance;
    lens.focal_length = 0.5 * distance;
    c.elements = {aperture, lens};
  }
  c.validate();
  return c;
}

ScenarioConfig build_nlos(const NlosParams& p) {
  ScenarioConfig c = desk_base(p.desk);
  c.kind = ScenarioKind::nlos;
  c.illumination = Illumination::coherent;
  c.sweep_parameter = SweepParameter::distance;
  c.master_seed = p.master_seed;
  c.diffuser = p.diffuser;
  const double unit = p.desk.unit_distance();
  const double l1 = p.lab_object_to_wall * unit;
  const double l2 = p.lab_wall_to_sensor * unit;
  c.sweep_values = {l1 + l2};
  c.lab_values = {p.lab_object_to_wall + p.lab_wall_to_sensor};
  c.diffraction_limit = diffraction_limit(c.wavelength, l1 + l2, c.feature_size);
  ElementSpec wall;
  wall.type = ElementSpec::Type::phase_screen;
  wall.plane_from_sensor = l2;
  wall.correlation_length = p.wall_correlation_length;
  wall.seed = p.wall_seed;
  c.elements = {wall};
  c.validate();
  return c;
}

ScenarioConfig build_incoherent_baseline(const FocusSweepParams& p) {
  FocusSweepParams coherent = p;
  coherent.illumination = Illumination::coherent;
  ScenarioConfig c = build_focus_sweep(coherent);
  c.kind = ScenarioKind::incoherent_baseline;
  c.illumination = Illumination::incoherent;
  c.diffuser.reset();
  c.elements.clear();
  // The 1/|R - r|^2 kernel has no wavelength; scale distances geometrically (fixed z / object).
  const double unit = p.desk.object_size() / p.desk.lab_object_size;
  c.sweep_values.clear();
  for (double d : p.lab_distances) c.sweep_values.push_back(d * unit);
  c.scale.desk_unit_distance = unit;
  c.normalization = Normalization::quantize;
  c.bits = 16;
  c.validate();
  return c;
}

ScenarioRunner::ScenarioRunner(const ScenarioConfig& config, int sweep_index) : config_(config) {
  config.validate();
  if (sweep_index < 0 || sweep_index >= static_cast<int>(config.sweep_values.size()))
    throw ArgumentError("sweep index out of range");
  const double value = config.sweep_values[sweep_index];
  const double distance =
      config.sweep_parameter == SweepParameter::distance ? value : config.object_to_sensor;
  const GridSpec grid = config.grid();

  geometry_.object_plane = 0.0;
  geometry_.sensor_plane = distance;
  geometry_.sensor_width = config.sensor_width;
  geometry_.sensor_height = config.sensor_height;
  geometry_.sensor_pitch = config.sensor_pitch;

  std::vector<ElementSpec> specs;
  for (const ElementSpec& e : config.elements) {
    if (is_window(e)) {
      const double size = e.swept ? value : e.size;
      geometry_.sensor_pitch = size / config.sensor_width;
    } else {
      specs.push_back(e);
    }
  }
  std::stable_sort(specs.begin(), specs.end(), [](const ElementSpec& a, const ElementSpec& b) {
    return a.plane_from_sensor > b.plane_from_sensor;
  });

  const Aperture* stop = nullptr;
  const ThinLens* lens = nullptr;
  elements_.reserve(specs.size());
  for (const ElementSpec& e : specs) {
    geometry_.element_planes.push_back(distance - e.plane_from_sensor);
    switch (e.type) {
      case ElementSpec::Type::aperture:
        elements_.emplace_back(Aperture{e.shape, e.swept ? value : e.size, e.offset});
        break;
      case ElementSpec::Type::lens:
        elements_.emplace_back(ThinLens{e.focal_length});
        break;
      case ElementSpec::Type::phase_screen:
        elements_.emplace_back(make_phase_screen(grid, e.correlation_length, e.seed));
        break;
    }
  }
  geometry_.validate();

  if (config.illumination == Illumination::coherent) {
    if (config.diffuser)
      diffuser_ = make_phase_screen(grid, config.diffuser->correlation_length, config.diffuser->seed);
    return;
  }
  for (const Element& e : elements_) {
    if (auto* a = std::get_if<Aperture>(&e)) stop = a;
    else if (auto* l = std::get_if<ThinLens>(&e)) lens = l;
    else throw GeometryError("incoherent illumination does not support phase screens");
  }
  if (!lens) {
    if (!elements_.empty()) throw GeometryError("incoherent lensless chain takes no elements");
    return;
  }
  if (elements_.size() != 2 || !stop || !std::holds_alternative<Aperture>(elements_.front()))
    throw GeometryError("incoherent imaging needs an aperture followed by a lens");
  psf_ = imaging_psf(geometry_.element_planes[1] - geometry_.object_plane, geometry_, *stop, *lens,
                     grid.pitch, grid.wavelength);
}

IntensityImage ScenarioRunner::sensor_image(const BitmapView& bitmap) const {
  const ScenarioConfig& c = config_;
  const ComplexField object =
      rasterize_object(bitmap, c.object_size, c.grid(), diffuser_ ? &*diffuser_ : nullptr);
  if (c.illumination == Illumination::coherent)
    return coherent_sensor_image(object, geometry_, elements_, propagation_);
  if (psf_) return image_through_psf(intensity(object), geometry_, *psf_);
  return incoherent_lensless_image(object, geometry_);
}

RealGrid ScenarioRunner::preprocess(const IntensityImage& sensor) const {
  const ScenarioConfig& c = config_;
  const IntensityImage small = downsample(sensor, c.target_width, c.target_height);
  if (c.normalization == Normalization::quantize) return quantize(small, c.bits).values();
  return standardize(small.values());
}

RealGrid ScenarioRunner::image(const BitmapView& bitmap) const {
  return preprocess(sensor_image(bitmap));
}

}  // namespace speckle
