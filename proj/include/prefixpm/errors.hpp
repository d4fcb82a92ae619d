#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace prefixpm {

// Every failure the package manager reports derives from Error. The kind
// decides the CLI exit code.
enum class ErrorKind {
  parse,       // malformed text: versions, atoms, recipes, patches, artifacts
  config,      // configuration files and repository layout
  resolution,  // not found, masked, ambiguous, cycles, slot conflicts
  build,       // phase failures, sandbox violations, patch application
  collision,   // merge refused by collision-protect
};

int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorKind::parse, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::parse, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class ResolutionError : public Error {
 public:
  explicit ResolutionError(const std::string& what)
      : Error(ErrorKind::resolution, what) {}
};

class NotFoundError : public ResolutionError {
 public:
  NotFoundError(std::string atom)
      : ResolutionError("no recipe matches '" + atom + "'"), atom_(std::move(atom)) {}
  const std::string& atom() const noexcept { return atom_; }

 private:
  std::string atom_;
};

class MaskedError : public ResolutionError {
 public:
  MaskedError(const std::string& atom, std::vector<std::string> keywords);
  const std::vector<std::string>& keywords() const noexcept { return keywords_; }

 private:
  std::vector<std::string> keywords_;
};

class AmbiguityError : public ResolutionError {
 public:
  AmbiguityError(const std::string& name, std::vector<std::string> candidates);
  const std::vector<std::string>& candidates() const noexcept { return candidates_; }

 private:
  std::vector<std::string> candidates_;
};

class CycleError : public ResolutionError {
 public:
  explicit CycleError(std::vector<std::string> cycle);
  const std::vector<std::string>& cycle() const noexcept { return cycle_; }

 private:
  std::vector<std::string> cycle_;
};

class SlotConflictError : public ResolutionError {
 public:
  using ResolutionError::ResolutionError;
};

class BuildError : public Error {
 public:
  explicit BuildError(const std::string& what) : Error(ErrorKind::build, what) {}
};

class PhaseError : public BuildError {
 public:
  PhaseError(std::string phase, std::size_t line, std::string message, std::string output);
  const std::string& phase() const noexcept { return phase_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& output() const noexcept { return output_; }

 private:
  std::string phase_;
  std::size_t line_;
  std::string output_;
};

class SandboxError : public BuildError {
 public:
  using BuildError::BuildError;
};

class PatchError : public BuildError {
 public:
  PatchError(std::string file, std::size_t hunk, const std::string& what)
      : BuildError(what), file_(std::move(file)), hunk_(hunk) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t hunk() const noexcept { return hunk_; }

 private:
  std::string file_;
  std::size_t hunk_;
};

// Raised when a patch does not apply forward but reverses cleanly.
class PatchAlreadyAppliedError : public BuildError {
 public:
  using BuildError::BuildError;
};

class CollisionError : public Error {
 public:
  CollisionError(std::string path, std::string owner);
  const std::string& path() const noexcept { return path_; }
  const std::string& owner() const noexcept { return owner_; }

 private:
  std::string path_;
  std::string owner_;
};

}  // namespace prefixpm
