#pragma once

#include <stdexcept>
#include <string>

namespace lbkt {

/// Runtime failure inside the library (bad data, numeric blow-up, I/O).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration; carries the dotted path of the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// NaN or Inf observed in a loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lbkt
