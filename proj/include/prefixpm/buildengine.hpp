#pragma once

#include <prefixpm/config.hpp>
#include <prefixpm/fsutil.hpp>
#include <prefixpm/repository.hpp>
#include <prefixpm/resolver.hpp>
#include <prefixpm/vdb.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace prefixpm {

struct BuildContext {
  std::filesystem::path S;  // work directory
  std::filesystem::path D;  // install image
  std::filesystem::path distfiles;
  std::map<std::string, std::string> env;
  EffectiveUse use;
  std::filesystem::path target_root;
  std::string eprefix;
  std::string chost;
  std::string cbuild;
  // Applied after the recipe's bundled patches.
  std::vector<std::filesystem::path> user_patches;
};

// Work area under $TMPDIR holding S, D and the distfiles cache; removed on
// destruction.
class BuildArea {
 public:
  BuildArea();
  const std::filesystem::path& path() const { return dir_.path(); }
  std::filesystem::path work() const { return path() / "work"; }
  std::filesystem::path image() const { return path() / "image"; }
  std::filesystem::path distfiles() const { return path() / "distfiles"; }

 private:
  TempDir dir_;
};

// Fills S, D, USE and the chost/cbuild pair from the configuration.
BuildContext make_context(const Config& config, const Recipe& recipe, const BuildArea& area);

inline constexpr std::string_view toy_magic = "!TOYOBJ 1";

struct ToyArtifact {
  std::string machine;
  std::string cflags;
  std::string payload;
};

std::string render_toy_artifact(const ToyArtifact& artifact);
ToyArtifact parse_toy_artifact(std::string_view bytes, std::string_view origin);
std::string inspect_machine(const std::filesystem::path& file);

struct CommandResult {
  int status = 0;
  std::string output;
};

// Runs one phase line. Built-ins: toycc, install-file, make-dir, make-sym,
// echo-to, fail. Anything else is executed as a program with ctx.env in S.
CommandResult interpret_command(std::string_view line, BuildContext& ctx);

// fetch -> unpack -> prepare -> configure -> compile -> install.
void run_phases(const Recipe& recipe, BuildContext& ctx);

struct MergeRequest {
  ActionReason reason = ActionReason::target;
  // Recorded in the world file when reason is target.
  std::string world_atom;
};

// Copies D into the root behind vdb, records the entry and drops obsolete
// files of the replaced same-slot version. Callers hold the root lock.
VdbEntry merge(const Recipe& recipe, const BuildContext& ctx, Vdb& vdb,
               const MergeRequest& request);

// Removes the package's files that still match their recorded digests and
// are not claimed by another entry. Returns the removed paths. Callers hold
// the root lock.
std::vector<std::string> unmerge(const PackageId& id, Vdb& vdb);

struct ExecuteOptions {
  // Needed when the plan has host actions.
  const Config* host_config = nullptr;
  Vdb* host_vdb = nullptr;
  // Target atoms, used to write world entries.
  std::vector<Atom> targets;
  // Set in every build environment after configuration layering.
  std::map<std::string, std::string> env_overrides;
  std::function<void(const Action&)> on_action;
};

void execute_plan(const BuildPlan& plan, const Config& config, Vdb& vdb,
                  const ExecuteOptions& options = {});

// World-file atom for a target action: category/name, plus :slot when the
// matching target atom named a slot.
std::string world_atom_for(const Recipe& recipe, const std::vector<Atom>& targets);

}  // namespace prefixpm
