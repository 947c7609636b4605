#pragma once

#include <stdexcept>
#include <string>

namespace slsr {

// Error taxonomy shared by the library, the C API and the CLI.
// The CLI maps these onto its exit codes (config=1, missing input=2,
// numeric failure=3).

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class MissingInputError : public std::runtime_error {
 public:
  explicit MissingInputError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace slsr
