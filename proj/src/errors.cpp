#include <prefixpm/errors.hpp>

namespace prefixpm {

namespace {

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += sep;
    out += item;
  }
  return out;
}

}  // namespace

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::parse:
    case ErrorKind::config:
      return 2;
    case ErrorKind::resolution:
      return 3;
    case ErrorKind::build:
      return 4;
    case ErrorKind::collision:
      return 5;
  }
  return 4;
}

MaskedError::MaskedError(const std::string& atom, std::vector<std::string> keywords)
    : ResolutionError("all candidates for '" + atom + "' are masked by keyword (" +
                      join(keywords, " ") + ")"),
      keywords_(std::move(keywords)) {}

AmbiguityError::AmbiguityError(const std::string& name, std::vector<std::string> candidates)
    : ResolutionError("short name '" + name + "' is ambiguous: " + join(candidates, ", ")),
      candidates_(std::move(candidates)) {}

CycleError::CycleError(std::vector<std::string> cycle)
    : ResolutionError("dependency cycle without a post-merge edge: " + join(cycle, " -> ")),
      cycle_(std::move(cycle)) {}

PhaseError::PhaseError(std::string phase, std::size_t line, std::string message,
                       std::string output)
    : BuildError("phase " + phase + " failed at line " + std::to_string(line) + ": " +
                 message),
      phase_(std::move(phase)),
      line_(line),
      output_(std::move(output)) {}

CollisionError::CollisionError(std::string path, std::string owner)
    : Error(ErrorKind::collision,
            "file collision: " + path + " is owned by " + owner),
      path_(std::move(path)),
      owner_(std::move(owner)) {}

}  // namespace prefixpm
