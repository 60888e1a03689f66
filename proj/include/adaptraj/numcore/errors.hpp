#pragma once

#include <stdexcept>
#include <string>

namespace adaptraj {

// Error taxonomy shared by every module. Each subtype maps to one failure
// class so callers (and the CLI exit-code logic) can dispatch on it.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad dimensions, invalid hyperparameters, malformed horizons.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward without a matching forward.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or scene-dump decoding failures.
class PersistenceError : public Error {
 public:
  using Error::Error;
};

/// Finite-difference or causality audit could not be carried out.
class AuditError : public Error {
 public:
  using Error::Error;
};

/// Ground truth requested before the stream clock made it observable.
class MaturationError : public Error {
 public:
  using Error::Error;
};

/// Training diverged; carries the stage name in the message.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace adaptraj
