#pragma once

#include <prefixpm/atoms.hpp>
#include <prefixpm/config.hpp>
#include <prefixpm/depexpr.hpp>
#include <prefixpm/repository.hpp>
#include <prefixpm/vdb.hpp>

#include <functional>
#include <string>
#include <vector>

namespace prefixpm {

enum class ActionReason { target, depend, rdepend, pdepend, changed_use_rebuild };

std::string_view reason_name(ActionReason reason);
ActionReason parse_reason(std::string_view text);

struct Action {
  Recipe recipe;
  EffectiveUse use;
  ActionReason reason = ActionReason::target;
  std::string target_root;
  // Build-time dependency of a cross build, installed into the host prefix.
  bool host = false;
};

struct BuildPlan {
  std::vector<Action> actions;

  bool empty() const { return actions.empty(); }
  // One line per action:
  //   <reason> <category>/<name>-<version>:<slot> USE="<flags>" -> <target_root>
  std::string render() const;
};

struct DepLists {
  std::vector<Atom> depend;
  std::vector<Atom> rdepend;
  std::vector<Atom> pdepend;
};

// How an any-of group picks its alternative: the first one already
// installed, otherwise the first one that can be provided at all.
struct AnyOfPolicy {
  std::function<bool(const Atom&)> installed;
  std::function<bool(const Atom&)> available;
};

DepLists expand_dependencies(const Recipe& recipe, const EffectiveUse& use,
                             const AnyOfPolicy& policy = {});

struct SolveOptions {
  // Installed packages to rebuild even though they satisfy their atoms.
  std::vector<PackageId> rebuilds;
  // Targets get an action even when an identical install exists.
  bool rebuild_targets = false;
  // Configuration of the build host for cross builds (DEPEND side).
  const Config* host_config = nullptr;
};

// Greedy depth-first resolution. DEPEND and RDEPEND providers are placed
// before their dependents; PDEPEND providers are resolved once the current
// target's hard closure is placed, so only cycles made entirely of hard edges
// are errors. In a cross build (CHOST != CBUILD) DEPEND is checked against
// host_vdb and anything missing there is planned for the host.
BuildPlan solve(const std::vector<Atom>& targets, const Config& config, const Vdb* host_vdb,
                const Vdb& target_vdb, const PackageTree& repos, const SolveOptions& options = {});

// Installed packages whose recorded USE (or recorded compiler/linker flags
// and FEATURES) differs from what the current configuration computes.
// Reverse dependencies are not included.
std::vector<PackageId> changed_use_rebuilds(const Config& config, const Vdb& vdb,
                                            const PackageTree& repos);

struct SlotConflict {
  std::string package;  // category/name
  std::string slot;
  std::vector<std::string> versions;
};

// Two distinct versions of one (category, name, slot) required together.
// A plan entry replacing an installed same-slot version is an upgrade.
std::vector<SlotConflict> check_slot_conflicts(const BuildPlan& plan, const Vdb& vdb);

}  // namespace prefixpm
