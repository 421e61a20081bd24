#pragma once

#include <stdexcept>
#include <string>

namespace vocseg {

// Bad or missing configuration: unknown keys, out-of-range settings, missing split lists.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data: unreadable images, illegal mask indices, corrupt logs.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Architecture construction or evaluation problems (channel mismatch, bad input shape).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when optimisation cannot continue, e.g. a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vocseg
