#pragma once

#include <stdexcept>
#include <string>

namespace mcrfm {

// Exit codes shared by the CLI. Library code throws; only tools/ translates.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kData = 3,
  kDivergence = 4,
  kIncompatibleCheckpoint = 5,
};

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed or truncated on-disk artifact (feature cache, episode, checkpoint).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidEpisode : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss, parameter, or solver state.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IncompatibleCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mcrfm
