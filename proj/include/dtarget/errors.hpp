#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dtarget {

/// Broad failure category; the CLI maps these onto process exit codes.
enum class ErrorKind { Parameter, Format, Bounds, Infeasible, Resource, Numeric, Config, Data, Episode, Io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& what) : Error(ErrorKind::Parameter, what) {}
};

/// Malformed binary file. Carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& what)
      : Error(ErrorKind::Format, what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

struct BoundsError : Error {
  explicit BoundsError(const std::string& what) : Error(ErrorKind::Bounds, what) {}
};

struct InfeasibleActionError : Error {
  explicit InfeasibleActionError(const std::string& what) : Error(ErrorKind::Infeasible, what) {}
};

struct ResourceError : Error {
  explicit ResourceError(const std::string& what) : Error(ErrorKind::Resource, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

/// A policy threw while deciding; `step()` is the 1-based timestep.
class EpisodeError : public Error {
 public:
  EpisodeError(std::size_t step, const std::string& what)
      : Error(ErrorKind::Episode, "episode failed at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace dtarget
