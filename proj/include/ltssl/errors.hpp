#pragma once

#include <stdexcept>
#include <string>

namespace ltssl {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kSuccess = 0,
  kConfigError = 1,
  kDataError = 2,
  kNumericFault = 3,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode code() const noexcept = 0;
};

/// Invalid configuration, shape mismatch, or out-of-range hyperparameter.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode code() const noexcept override { return ExitCode::kConfigError; }
};

/// Malformed dataset, bad label, unresolvable id.
class DataError : public Error {
 public:
  using Error::Error;
  ExitCode code() const noexcept override { return ExitCode::kDataError; }
};

/// NaN/Inf encountered; `where` names the layer or loss term.
class NumericFault : public Error {
 public:
  NumericFault(const std::string& where, const std::string& what)
      : Error("numeric fault in " + where + ": " + what), where_(where) {}
  ExitCode code() const noexcept override { return ExitCode::kNumericFault; }
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace ltssl
