#pragma once

#include <prefixpm/atoms.hpp>
#include <prefixpm/fsutil.hpp>
#include <prefixpm/repository.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace testsupport {

namespace fs = std::filesystem;

fs::path fixtures();
fs::path tree();
fs::path overlay(const std::string& name);
fs::path pm_binary();

struct RepoLine {
  std::string name;
  fs::path path;
  int priority = 0;
};

void write_repos_conf(const fs::path& config_root, const std::vector<RepoLine>& repos);

// Copies fixtures/configs/<name> to config_root and points repos.conf at the
// bundled tree.
void install_config(const std::string& name, const fs::path& config_root);

// relative path -> "file <sha256> <mode>" | "dir" | "link <target>"
using Snapshot = std::map<std::string, std::string>;
Snapshot snapshot(const fs::path& dir);
// Empty when equal, otherwise the differing paths.
std::string describe_difference(const Snapshot& before, const Snapshot& after);

struct ProcessResult {
  int status = -1;
  std::string out;
  std::string err;
};

// Runs argv[0] (a path) with the current environment adjusted by `env`:
// a value sets, nullopt removes. EPREFIX is removed unless given.
ProcessResult run_process(const std::vector<std::string>& argv,
                          std::map<std::string, std::optional<std::string>> env = {});
ProcessResult run_pm(const std::vector<std::string>& args,
                     std::map<std::string, std::optional<std::string>> env = {});

// Recipe for in-memory trees: "cat/name-version" plus header text.
prefixpm::Recipe recipe(const std::string& cpv, const std::string& header = "");

std::vector<std::string> lines(const std::string& text);
std::string slurp(const fs::path& path);

}  // namespace testsupport
