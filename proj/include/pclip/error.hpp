// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pclip {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller handed us a value that violates a documented precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A file on disk does not match its declared format. `location` is a byte
/// offset, a 1-based line number or a JSON path depending on the format.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::string location = {})
      : Error(location.empty() ? what : what + " (at " + location + ")"),
        location_(std::move(location)) {}

  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

/// An embedding backend could not produce a vector (missing model, inference
/// failure, unknown key in a precomputed store).
class BackendError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage failed; carries the stage name for the CLI diagnostic.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// CLI exit codes.
enum class ExitCode : int {
  kSuccess = 0,
  kConfigError = 1,
  kFormatError = 2,
  kStageFailure = 3,
};

}  // namespace pclip
