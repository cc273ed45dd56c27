#pragma once

#include <stdexcept>
#include <string>

namespace awsrn {

/// Base of every error raised by the library. `category()` is a short
/// machine-parsable tag used by the CLI's one-line error reports.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* category() const noexcept { return "error"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "shape"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "config"; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "numeric"; }
};

class AutodiffError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "autodiff"; }
};

class ImageError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "image"; }
};

class DataError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "data"; }
};

class TrainingError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "training"; }
};

class PruneError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "prune"; }
};

enum class CheckpointErrorKind { Io, BadMagic, VersionMismatch, RegistryMismatch, Truncated };

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : Error(what), kind_(kind) {}

  CheckpointErrorKind kind() const noexcept { return kind_; }

  const char* category() const noexcept override {
    switch (kind_) {
      case CheckpointErrorKind::Io: return "checkpoint-io";
      case CheckpointErrorKind::BadMagic: return "checkpoint-magic";
      case CheckpointErrorKind::VersionMismatch: return "checkpoint-version";
      case CheckpointErrorKind::RegistryMismatch: return "checkpoint-registry";
      case CheckpointErrorKind::Truncated: return "checkpoint-truncated";
    }
    return "checkpoint";
  }

 private:
  CheckpointErrorKind kind_;
};

}  // namespace awsrn
