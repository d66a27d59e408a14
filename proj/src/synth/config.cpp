#include <cmath>
#include <fstream>

#include "../json_reader.hpp"
#include "speckle/synth.hpp"

namespace speckle {

using nlohmann::json;

using json_reader::join;
using json_reader::Reader;

namespace {

const std::initializer_list<std::pair<const char*, ScenarioKind>> kKinds{
    {"focus_sweep", ScenarioKind::focus_sweep},
    {"aperture_sweep", ScenarioKind::aperture_sweep},
    {"nlos", ScenarioKind::nlos},
    {"incoherent_baseline", ScenarioKind::incoherent_baseline}};
const std::initializer_list<std::pair<const char*, Illumination>> kIlluminations{
    {"coherent", Illumination::coherent}, {"incoherent", Illumination::incoherent}};

std::string to_string(SweepParameter p) { return p == SweepParameter::distance ? "distance" : "aperture"; }
std::string to_string(Normalization n) { return n == Normalization::standardize ? "standardize" : "quantize"; }
std::string to_string(ApertureShape s) { return s == ApertureShape::square ? "square" : "circular"; }

std::string to_string(ElementSpec::Type t) {
  switch (t) {
    case ElementSpec::Type::aperture: return "aperture";
    case ElementSpec::Type::lens: return "lens";
    case ElementSpec::Type::phase_screen: return "phase_screen";
  }
  return {};
}

json element_json(const ElementSpec& e) {
  json j{{"type", to_string(e.type)}, {"plane_from_sensor", e.plane_from_sensor}};
  switch (e.type) {
    case ElementSpec::Type::aperture:
      j["shape"] = to_string(e.shape);
      j["size"] = e.size;
      j["offset"] = e.offset;
      j["swept"] = e.swept;
      break;
    case ElementSpec::Type::lens:
      j["focal_length"] = e.focal_length;
      break;
    case ElementSpec::Type::phase_screen:
      j["correlation_length"] = e.correlation_length;
      j["seed"] = e.seed;
      break;
  }
  return j;
}

ElementSpec parse_element(Reader r) {
  ElementSpec e;
  e.type = r.choice<ElementSpec::Type>("type", {{"aperture", ElementSpec::Type::aperture},
                                                {"lens", ElementSpec::Type::lens},
                                                {"phase_screen", ElementSpec::Type::phase_screen}});
  e.plane_from_sensor = r.number("plane_from_sensor");
  switch (e.type) {
    case ElementSpec::Type::aperture: {
      e.shape = r.choice<ApertureShape>("shape", {{"square", ApertureShape::square},
                                                  {"circular", ApertureShape::circular}});
      e.swept = r.boolean("swept", false);
      e.size = e.swept ? r.number("size", 0.0) : r.number("size");
      if (r.has("offset")) {
        const auto off = r.numbers("offset");
        if (off.size() != 2) throw ConfigError(join(r.path(), "offset"), "expected [x, y]");
        e.offset = {off[0], off[1]};
      } else {
        r.boolean("offset", false);
      }
      break;
    }
    case ElementSpec::Type::lens:
      e.focal_length = r.number("focal_length");
      break;
    case ElementSpec::Type::phase_screen:
      e.correlation_length = r.number("correlation_length", 0.0);
      e.seed = r.seed("seed");
      break;
  }
  r.finish();
  return e;
}

}  // namespace

std::string to_string(ScenarioKind kind) {
  for (const auto& [name, value] : kKinds)
    if (value == kind) return name;
  return {};
}

std::string to_string(Illumination illumination) {
  return illumination == Illumination::coherent ? "coherent" : "incoherent";
}

void ScenarioConfig::validate() const {
  auto positive = [](double v, const char* path) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(path, "must be > 0");
  };
  positive(wavelength, "optics.wavelength");
  positive(pitch, "optics.pitch");
  positive(object_size, "optics.object_size");
  if (pitch < wavelength) throw ConfigError("optics.pitch", "must be >= wavelength");
  if (grid_size < 2) throw ConfigError("optics.grid_size", "must be >= 2");
  if (object_size > grid_size * pitch * (1 + 1e-12))
    throw ConfigError("optics.object_size", "object does not fit on the grid");
  if (diffuser && diffuser->correlation_length < 0.0)
    throw ConfigError("optics.diffuser.correlation_length", "must be >= 0");
  if (sensor_width < 1) throw ConfigError("geometry.sensor.width", "must be >= 1");
  if (sensor_height < 1) throw ConfigError("geometry.sensor.height", "must be >= 1");
  if (sweep_values.empty()) throw ConfigError("sweep.values", "sweep list must be nonempty");
  for (std::size_t i = 0; i < sweep_values.size(); ++i)
    if (!(sweep_values[i] > 0.0))
      throw ConfigError("sweep.values[" + std::to_string(i) + "]", "must be > 0");
  if (!lab_values.empty() && lab_values.size() != sweep_values.size())
    throw ConfigError("sweep.lab_values", "length must match sweep.values");
  if (sweep_values.size() > 65535) throw ConfigError("sweep.values", "at most 65535 sweep points");
  if (threshold_index && (*threshold_index < 0 || *threshold_index >= static_cast<int>(sweep_values.size())))
    throw ConfigError("sweep.threshold_index", "out of range");

  int swept = 0, window = 0, lenses = 0;
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const ElementSpec& e = elements[i];
    const std::string p = "elements[" + std::to_string(i) + "]";
    if (e.plane_from_sensor < 0.0) throw ConfigError(p + ".plane_from_sensor", "must be >= 0");
    if (e.type == ElementSpec::Type::aperture) {
      if (e.swept) ++swept;
      else positive(e.size, (p + ".size").c_str());
      if (e.plane_from_sensor == 0.0) {
        ++window;
        if (e.shape != ApertureShape::square)
          throw ConfigError(p + ".shape", "a sensor window must be square");
      }
    } else if (e.type == ElementSpec::Type::lens) {
      ++lenses;
      if (!std::isfinite(e.focal_length) || e.focal_length == 0.0)
        throw ConfigError(p + ".focal_length", "must be finite and nonzero");
    } else if (e.correlation_length < 0.0) {
      throw ConfigError(p + ".correlation_length", "must be >= 0");
    }
    if (e.plane_from_sensor == 0.0 && e.type != ElementSpec::Type::aperture)
      throw ConfigError(p + ".plane_from_sensor", "only an aperture may sit on the sensor");
  }
  if (window > 1) throw ConfigError("elements", "at most one sensor window");
  if (sweep_parameter == SweepParameter::aperture) {
    if (swept != 1) throw ConfigError("elements", "an aperture sweep needs exactly one swept aperture");
    positive(object_to_sensor, "geometry.object_to_sensor");
  } else if (swept != 0) {
    throw ConfigError("elements", "swept aperture requires sweep.parameter = aperture");
  }
  if (window == 0) positive(sensor_pitch, "geometry.sensor.pitch");
  if (illumination == Illumination::incoherent && lenses > 1)
    throw ConfigError("elements", "incoherent imaging supports a single lens");

  if (target_width < 1 || target_width > sensor_width)
    throw ConfigError("preprocessing.target_width", "must be in [1, sensor width]");
  if (target_height < 1 || target_height > sensor_height)
    throw ConfigError("preprocessing.target_height", "must be in [1, sensor height]");
  if (bits < 1 || bits > 16) throw ConfigError("preprocessing.bits", "must be in [1, 16]");
}

json to_json(const ScenarioConfig& c) {
  json optics{{"wavelength", c.wavelength},
              {"grid_size", c.grid_size},
              {"pitch", c.pitch},
              {"object_size", c.object_size},
              {"diffuser", nullptr}};
  if (c.diffuser)
    optics["diffuser"] = {{"correlation_length", c.diffuser->correlation_length},
                          {"seed", c.diffuser->seed}};
  json elements = json::array();
  for (const ElementSpec& e : c.elements) elements.push_back(element_json(e));
  return json{
      {"kind", to_string(c.kind)},
      {"illumination", to_string(c.illumination)},
      {"optics", optics},
      {"geometry",
       {{"object_to_sensor", c.object_to_sensor},
        {"sensor", {{"width", c.sensor_width}, {"height", c.sensor_height}, {"pitch", c.sensor_pitch}}}}},
      {"sweep",
       {{"parameter", to_string(c.sweep_parameter)},
        {"values", c.sweep_values},
        {"lab_values", c.lab_values},
        {"feature_size", c.feature_size},
        {"diffraction_limit", c.diffraction_limit},
        {"threshold_index", c.threshold_index ? json(*c.threshold_index) : json(nullptr)}}},
      {"elements", elements},
      {"preprocessing",
       {{"target_width", c.target_width},
        {"target_height", c.target_height},
        {"normalization", to_string(c.normalization)},
        {"bits", c.bits}}},
      {"master_seed", c.master_seed},
      {"scale",
       {{"base_fresnel_number", c.scale.base_fresnel_number},
        {"lab_object_size", c.scale.lab_object_size},
        {"desk_unit_distance", c.scale.desk_unit_distance}}}};
}

ScenarioConfig config_from_json(const json& j) {
  ScenarioConfig c;
  Reader root(j, "");
  c.kind = root.choice("kind", kKinds);
  c.illumination = root.choice("illumination", kIlluminations);

  Reader optics = root.object("optics");
  c.wavelength = optics.number("wavelength");
  c.grid_size = optics.integer("grid_size");
  c.pitch = optics.number("pitch");
  c.object_size = optics.number("object_size");
  if (optics.has("diffuser")) {
    Reader d = optics.object("diffuser");
    c.diffuser = DiffuserSpec{d.number("correlation_length", 0.0), d.seed("seed")};
    d.finish();
  } else {
    optics.boolean("diffuser", false);
  }
  optics.finish();

  Reader geometry = root.object("geometry");
  c.object_to_sensor = geometry.number("object_to_sensor", 0.0);
  Reader sensor = geometry.object("sensor");
  c.sensor_width = sensor.integer("width");
  c.sensor_height = sensor.integer("height");
  c.sensor_pitch = sensor.number("pitch", 0.0);
  sensor.finish();
  geometry.finish();

  Reader sweep = root.object("sweep");
  c.sweep_parameter = sweep.choice<SweepParameter>(
      "parameter", {{"distance", SweepParameter::distance}, {"aperture", SweepParameter::aperture}});
  c.sweep_values = sweep.numbers("values");
  if (sweep.has("lab_values")) c.lab_values = sweep.numbers("lab_values");
  else sweep.boolean("lab_values", false);
  c.feature_size = sweep.number("feature_size", 0.0);
  c.diffraction_limit = sweep.number("diffraction_limit", 0.0);
  if (sweep.has("threshold_index")) c.threshold_index = sweep.integer("threshold_index");
  else sweep.boolean("threshold_index", false);
  sweep.finish();

  if (root.has("elements")) {
    const json& list = root.raw("elements");
    if (!list.is_array()) throw ConfigError("elements", "expected an array");
    for (std::size_t i = 0; i < list.size(); ++i)
      c.elements.push_back(parse_element(Reader(list[i], "elements[" + std::to_string(i) + "]")));
  } else {
    root.boolean("elements", false);
  }

  if (root.has("preprocessing")) {
    Reader pre = root.object("preprocessing");
    c.target_width = pre.integer("target_width", c.target_width);
    c.target_height = pre.integer("target_height", c.target_height);
    if (pre.has("normalization"))
      c.normalization = pre.choice<Normalization>(
          "normalization",
          {{"standardize", Normalization::standardize}, {"quantize", Normalization::quantize}});
    c.bits = pre.integer("bits", c.bits);
    pre.finish();
  } else {
    root.boolean("preprocessing", false);
  }

  c.master_seed = root.seed("master_seed", c.master_seed);
  if (root.has("scale")) {
    Reader s = root.object("scale");
    c.scale.base_fresnel_number = s.number("base_fresnel_number", 0.0);
    c.scale.lab_object_size = s.number("lab_object_size", 0.0);
    c.scale.desk_unit_distance = s.number("desk_unit_distance", 0.0);
    s.finish();
  } else {
    root.boolean("scale", false);
  }
  root.finish();
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace speckle
