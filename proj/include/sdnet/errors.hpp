#pragma once

#include <stdexcept>
#include <string>

namespace sdnet {

/// Base for all library errors; `kind()` is the stable machine-readable tag
/// the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what) : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

struct NoTissueError : Error {
  explicit NoTissueError(const std::string& what) : Error("no_tissue", what) {}
};

struct DegenerateError : Error {
  explicit DegenerateError(const std::string& what) : Error("degenerate", what) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& what) : Error("training_failed", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace sdnet
