#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "speckle/error.hpp"

namespace speckle::json_reader {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

/// Typed access to one JSON object that remembers which keys were consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(join(path_, key), "missing required key");
    return j_.at(key);
  }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(join(path_, key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(join(path_, key), "must be finite");
    return d;
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : mark(key, fallback); }

  int integer(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(join(path_, key), "expected an integer");
    return v.get<int>();
  }
  int integer(const std::string& key, int fallback) { return has(key) ? integer(key) : mark(key, fallback); }

  std::uint64_t seed(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigError(join(path_, key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    return has(key) ? seed(key) : mark(key, fallback);
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return mark(key, fallback);
    const json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(join(path_, key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(join(path_, key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) throw ConfigError(join(path_, key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        throw ConfigError(join(path_, key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  Reader object(const std::string& key) { return Reader(raw(key), join(path_, key)); }

  template <typename Enum>
  Enum choice(const std::string& key, std::initializer_list<std::pair<const char*, Enum>> options) {
    const std::string s = string(key);
    std::string names;
    for (const auto& [name, value] : options) {
      if (s == name) return value;
      names += names.empty() ? name : std::string(", ") + name;
    }
    throw ConfigError(join(path_, key), "unknown value '" + s + "' (expected one of " + names + ")");
  }

  const std::string& path() const { return path_; }

  /// Rejects any key that was never read.
  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.count(key)) throw ConfigError(join(path_, key), "unknown key");
  }

 private:
  template <typename T>
  T mark(const std::string& key, T value) {
    used_.insert(key);
    return value;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace speckle::json_reader
