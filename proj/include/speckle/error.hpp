#pragma once

#include <stdexcept>
#include <string>

namespace speckle {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// fieldcore
class FormatError : public Error { using Error::Error; };
class LengthError : public Error { using Error::Error; };
class PairingError : public Error { using Error::Error; };
class ArgumentError : public Error { using Error::Error; };

// optics
class GeometryError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class SingularKernelError : public Error { using Error::Error; };

// synth / persistence
class CorruptionError : public Error { using Error::Error; };
class SplitError : public Error { using Error::Error; };

// learn
class ShapeError : public Error { using Error::Error; };
class ArchitectureError : public Error { using Error::Error; };

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Config schema violation; `path` names the offending field (e.g. "preprocessing.bits").
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace speckle
