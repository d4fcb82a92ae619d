#pragma once

#include <prefixpm/atoms.hpp>
#include <prefixpm/config.hpp>
#include <prefixpm/repository.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace prefixpm {

enum class Toolchain { host, bootstrapped };

struct BootstrapStage {
  int number = 0;
  std::vector<Atom> packages;
  Toolchain toolchain = Toolchain::host;
};

struct BootstrapPlan {
  std::filesystem::path prefix;
  std::vector<BootstrapStage> stages;
  bool rap = false;
};

// pm-runtime, toy-cc, toy-core, toy-sh, toy-libc.
std::vector<Atom> default_system_set();

// CC recorded for builds with each toolchain.
inline constexpr const char* host_cc_marker = "host-cc";
inline constexpr const char* bootstrapped_cc = "toy-cc";

// Refuses a non-empty prefix unless it carries a stage marker, in which case
// execution resumes after the recorded stage.
BootstrapPlan plan_bootstrap(const std::filesystem::path& prefix, bool rap,
                             const std::vector<Atom>& system_set);

// Last completed stage from <prefix>/.bootstrap-stage, 0 if absent.
int completed_stage(const std::filesystem::path& prefix);

struct BootstrapOptions {
  // Installed by pm-runtime as <prefix>/usr/bin/pm; defaults to the running
  // executable.
  std::filesystem::path pm_binary;
  // Stop once this stage is complete (simulates an interrupted run).
  std::optional<int> stop_after_stage;
  std::function<void(const std::string&)> progress;
};

struct BootstrapReport {
  std::vector<int> stages_run;
  std::vector<std::string> merged;  // category/name-version:slot, in order
};

BootstrapReport execute_bootstrap(const BootstrapPlan& plan, const PackageTree& repos,
                                  const Config& host_config, const BootstrapOptions& options = {});

// <prefix>/startprefix; refuses until stage 3 is complete.
std::filesystem::path write_startprefix(const std::filesystem::path& prefix);

}  // namespace prefixpm
