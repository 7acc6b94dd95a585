#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace emnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed mesh input or a mesh that violates its structural invariants.
class MeshError : public Error {
 public:
  using Error::Error;
};

/// Incompatible tensor shapes passed to a primitive.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN produced during a forward computation or training step.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid model / training / CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or manifest I/O failure.
class IoError : public Error {
 public:
  using Error::Error;
};

using WarningHandler = std::function<void(const std::string&)>;

/// Replaces the process-wide warning sink (stderr by default). Returns the
/// previous handler so tests can restore it.
WarningHandler set_warning_handler(WarningHandler handler);

void warn(const std::string& message);

}  // namespace emnn
