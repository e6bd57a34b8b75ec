#pragma once

#include <stdexcept>
#include <string>

namespace coach {

/// Process exit codes shared by the CLI and the acceptance runner.
enum class ExitCode : int {
    kSuccess = 0,
    kConfig = 2,
    kData = 3,
    kNumeric = 4,
};

/// Invalid configuration (bad flags, inconsistent parameters).
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed or missing input data.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf encountered during training or evaluation.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (shape mismatch, mixed batch, ...).
class ContractViolation : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Generator exhausted its rejection budget.
class GenerationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace coach
