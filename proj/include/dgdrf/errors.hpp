#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace dgdrf {

/// Invalid argument to a library operation (bad dimension, out-of-range value).
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Mixing scheme cannot be applied to the given graph.
struct SchemeError : ParameterError {
  using ParameterError::ParameterError;
};

/// A quantity that requires sigma2 < 1 was handed a disconnected or periodic network.
struct DivergenceError : ParameterError {
  using ParameterError::ParameterError;
};

/// Theory parameters outside the regime where the prescriptions are defined.
struct OutOfRegimeError : ParameterError {
  using ParameterError::ParameterError;
};

/// Precondition of a numerical verifier was not met (e.g. eta * ||L|| > 1).
struct PreconditionError : ParameterError {
  using ParameterError::ParameterError;
};

/// Metric cannot be computed on this dataset (e.g. excess risk without planted truth).
struct UnsupportedMetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Run or experiment configuration is inconsistent. `field` names the offending key.
struct ConfigError : std::runtime_error {
  ConfigError(std::string field_name, const std::string& what)
      : std::runtime_error(field_name + ": " + what), field(std::move(field_name)) {}
  std::string field;
};

/// CSV/trace ingestion failure; `line` is the 1-based line number in the file, 0 if unknown.
struct IngestionError : std::runtime_error {
  IngestionError(std::size_t line_number, const std::string& what)
      : std::runtime_error(line_number ? "row " + std::to_string(line_number) + ": " + what : what),
        line(line_number) {}
  std::size_t line;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dgdrf
