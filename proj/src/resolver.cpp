#include <prefixpm/resolver.hpp>

#include <prefixpm/errors.hpp>
#include <prefixpm/fsutil.hpp>
#include <prefixpm/textfile.hpp>

#include <algorithm>
#include <deque>
#include <map>
#include <optional>

namespace prefixpm {

namespace {

void expand_node(const DepNode& node, const FlagSet& use, const AnyOfPolicy& policy,
                 std::vector<Atom>& out) {
  switch (node.kind) {
    case DepNode::Kind::leaf:
      out.push_back(node.atom);
      return;
    case DepNode::Kind::all_of:
      for (const auto& child : node.children) expand_node(child, use, policy, out);
      return;
    case DepNode::Kind::conditional:
      if (use.contains(node.flag) != node.negated) {
        for (const auto& child : node.children) expand_node(child, use, policy, out);
      }
      return;
    case DepNode::Kind::any_of:
      break;
  }

  std::vector<std::vector<Atom>> alternatives;
  for (const auto& child : node.children) {
    std::vector<Atom> atoms;
    expand_node(child, use, policy, atoms);
    alternatives.push_back(std::move(atoms));
  }
  auto all = [](const std::vector<Atom>& atoms, const std::function<bool(const Atom&)>& pred) {
    return std::all_of(atoms.begin(), atoms.end(), pred);
  };
  const std::vector<Atom>* chosen = nullptr;
  if (policy.installed) {
    for (const auto& alt : alternatives) {
      if (all(alt, policy.installed)) {
        chosen = &alt;
        break;
      }
    }
  }
  if (!chosen) {
    for (const auto& alt : alternatives) {
      if (!policy.available || all(alt, policy.available)) {
        chosen = &alt;
        break;
      }
    }
  }
  if (!chosen)
    throw ResolutionError("no satisfiable alternative in '" + render_dep_expr(node) + "'");
  out.insert(out.end(), chosen->begin(), chosen->end());
}

std::vector<Atom> expand_string(const std::string& text, const FlagSet& use,
                                const AnyOfPolicy& policy) {
  std::vector<Atom> out;
  expand_node(parse_dep_expr(text), use, policy, out);
  return out;
}

enum class EdgeKind { target, depend, rdepend, pdepend, rebuild };

ActionReason reason_for(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::target: return ActionReason::target;
    case EdgeKind::depend: return ActionReason::depend;
    case EdgeKind::rdepend: return ActionReason::rdepend;
    case EdgeKind::pdepend: return ActionReason::pdepend;
    case EdgeKind::rebuild: return ActionReason::changed_use_rebuild;
  }
  return ActionReason::target;
}

class Solver {
 public:
  Solver(const Config& config, const Vdb* host_vdb, const Vdb& target_vdb,
         const PackageTree& repos, const SolveOptions& options)
      : config_(config),
        host_vdb_(host_vdb),
        target_vdb_(target_vdb),
        repos_(repos),
        options_(options),
        cross_(config.is_cross()) {}

  BuildPlan run(const std::vector<Atom>& targets) {
    for (const auto& atom : targets) {
      root_visit(atom, EdgeKind::target);
    }
    for (const auto& id : options_.rebuilds) {
      Atom atom;
      atom.op = AtomOp::eq;
      atom.category = id.category;
      atom.name = id.name;
      atom.version = id.version;
      atom.slot = id.slot;
      root_visit(atom, EdgeKind::rebuild);
    }
    BuildPlan plan;
    for (std::size_t index : order_) {
      auto& node = nodes_[index];
      plan.actions.push_back({node.recipe, node.use, node.reason,
                              node.host ? host_root() : target_root(), node.host});
    }
    return plan;
  }

 private:
  enum class State { visiting, done };

  struct Node {
    Recipe recipe;
    EffectiveUse use;
    ActionReason reason;
    bool host;
    State state;
  };

  struct Pending {
    Atom atom;
    bool host;
  };

  std::string target_root() const { return config_.root.string(); }
  std::string host_root() const {
    return options_.host_config ? options_.host_config->root.string() : std::string("/");
  }

  const Vdb& vdb_for(bool host) const { return host ? *host_vdb_ : target_vdb_; }
  const Config& config_for(bool host) const { return host ? *options_.host_config : config_; }

  void root_visit(const Atom& atom, EdgeKind kind) {
    visit(atom, kind, false, true);
    while (!pending_.empty()) {
      auto p = std::move(pending_.front());
      pending_.pop_front();
      visit(p.atom, EdgeKind::pdepend, p.host, false);
    }
  }

  std::optional<std::size_t> plan_node_for(const Atom& atom, bool host) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      if (n.host == host && atom_matches(atom, n.recipe.id, n.use.enabled)) return i;
    }
    return std::nullopt;
  }

  bool target_is_current(const Atom& atom, const Vdb& vdb, const Config& cfg) const {
    auto installed = vdb.match(atom);
    if (installed.empty()) return false;
    const Recipe* best = nullptr;
    try {
      best = &repos_.best_match(atom, cfg.accept_keywords());
    } catch (const NotFoundError&) {
      return true;
    }
    for (const auto* e : installed) {
      if (e->id.version == best->id.version &&
          e->use == compute_use(cfg, *best).enabled)
        return true;
    }
    return false;
  }

  [[noreturn]] void cycle_from(std::size_t index) const {
    std::vector<std::string> cycle;
    auto it = std::find(stack_.begin(), stack_.end(), index);
    for (; it != stack_.end(); ++it) cycle.push_back(nodes_[*it].recipe.id.str());
    cycle.push_back(nodes_[index].recipe.id.str());
    throw CycleError(std::move(cycle));
  }

  void visit(const Atom& raw, EdgeKind kind, bool host, bool forced) {
    if (host && (!host_vdb_ || !options_.host_config)) {
      throw ResolutionError("build-time dependency '" + raw.str() +
                            "' is not installed on the build host and no host prefix is "
                            "configured");
    }
    const Atom atom = repos_.qualify(raw);
    const auto& vdb = vdb_for(host);
    const auto& cfg = config_for(host);

    if (auto existing = plan_node_for(atom, host)) {
      auto& node = nodes_[*existing];
      if (kind == EdgeKind::target) node.reason = ActionReason::target;
      if (node.state == State::visiting) {
        bool self = !stack_.empty() && stack_.back() == *existing;
        if (kind == EdgeKind::rdepend && self) return;
        cycle_from(*existing);
      }
      return;
    }

    if (kind == EdgeKind::target) {
      // An installed target is replaced when the tree offers another
      // version or the USE configuration moved.
      if (!options_.rebuild_targets && target_is_current(atom, vdb, cfg)) return;
    } else if (!forced && !vdb.match(atom).empty()) {
      return;
    }

    const Recipe& recipe = repos_.best_match(atom, cfg.accept_keywords());
    for (const auto& n : nodes_) {
      if (n.host == host && n.recipe.id.package() == recipe.id.package() &&
          n.recipe.id.slot == recipe.id.slot) {
        throw SlotConflictError("slot conflict: " + n.recipe.id.slotted() + " and " +
                                recipe.id.slotted() + " are both required (by '" + atom.str() +
                                "')");
      }
    }
    EffectiveUse use = compute_use(cfg, recipe);
    for (const auto& dep : atom.use_deps) {
      if (use.enabled.contains(dep.flag) != dep.enabled)
        throw ResolutionError("'" + atom.str() + "' requires USE " + (dep.enabled ? "" : "-") +
                              dep.flag + " but " + recipe.id.str() + " is configured otherwise");
    }

    const std::size_t index = nodes_.size();
    nodes_.push_back({recipe, use, reason_for(kind), host, State::visiting});
    stack_.push_back(index);

    AnyOfPolicy policy;
    policy.installed = [this, host](const Atom& a) {
      return !vdb_for(host).match(repos_.qualify(a)).empty();
    };
    policy.available = [this, host](const Atom& a) {
      try {
        repos_.best_match(a, config_for(host).accept_keywords());
        return true;
      } catch (const ResolutionError&) {
        return false;
      }
    };
    // Copies: nodes_ may reallocate while recursing.
    const auto deps = expand_dependencies(recipe, use, policy);
    const bool depend_on_host = host || cross_;
    for (const auto& d : deps.depend) visit(d, EdgeKind::depend, depend_on_host, false);
    for (const auto& d : deps.rdepend) visit(d, EdgeKind::rdepend, host, false);

    nodes_[index].state = State::done;
    order_.push_back(index);
    stack_.pop_back();
    for (const auto& d : deps.pdepend) pending_.push_back({d, host});
  }

  const Config& config_;
  const Vdb* host_vdb_;
  const Vdb& target_vdb_;
  const PackageTree& repos_;
  const SolveOptions& options_;
  const bool cross_;

  std::vector<Node> nodes_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> stack_;
  std::deque<Pending> pending_;
};

bool same_tokens(const std::string& a, const std::string& b) {
  auto x = split_words(a);
  auto y = split_words(b);
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  x.erase(std::unique(x.begin(), x.end()), x.end());
  y.erase(std::unique(y.begin(), y.end()), y.end());
  return x == y;
}

}  // namespace

std::string_view reason_name(ActionReason reason) {
  switch (reason) {
    case ActionReason::target: return "target";
    case ActionReason::depend: return "depend";
    case ActionReason::rdepend: return "rdepend";
    case ActionReason::pdepend: return "pdepend";
    case ActionReason::changed_use_rebuild: return "changed-use-rebuild";
  }
  return "target";
}

ActionReason parse_reason(std::string_view text) {
  for (auto r : {ActionReason::target, ActionReason::depend, ActionReason::rdepend,
                 ActionReason::pdepend, ActionReason::changed_use_rebuild}) {
    if (reason_name(r) == text) return r;
  }
  throw FormatError("unknown install reason '" + std::string(text) + "'");
}

std::string BuildPlan::render() const {
  std::string out;
  for (const auto& a : actions) {
    out += std::string(reason_name(a.reason)) + " " + a.recipe.id.slotted() + " USE=\"" +
           join(std::vector<std::string>(a.use.enabled.begin(), a.use.enabled.end()), " ") +
           "\" -> " + a.target_root + "\n";
  }
  return out;
}

DepLists expand_dependencies(const Recipe& recipe, const EffectiveUse& use,
                             const AnyOfPolicy& policy) {
  DepLists out;
  out.depend = expand_string(recipe.depend, use.enabled, policy);
  out.rdepend = expand_string(recipe.rdepend, use.enabled, policy);
  out.pdepend = expand_string(recipe.pdepend, use.enabled, policy);
  return out;
}

BuildPlan solve(const std::vector<Atom>& targets, const Config& config, const Vdb* host_vdb,
                const Vdb& target_vdb, const PackageTree& repos, const SolveOptions& options) {
  auto plan = Solver(config, host_vdb, target_vdb, repos, options).run(targets);
  if (auto conflicts = check_slot_conflicts(plan, target_vdb); !conflicts.empty()) {
    const auto& c = conflicts.front();
    throw SlotConflictError("slot conflict in " + c.package + ":" + c.slot + " (" +
                            join(c.versions, ", ") + ")");
  }
  return plan;
}

std::vector<PackageId> changed_use_rebuilds(const Config& config, const Vdb& vdb,
                                            const PackageTree& repos) {
  std::vector<PackageId> out;
  for (const auto& entry : vdb.entries()) {
    const Recipe* recipe = repos.find_exact(entry.id.category, entry.id.name, entry.id.version);
    if (!recipe) {
      warn(entry.id.str() + " is installed but its recipe is no longer in any repository");
      continue;
    }
    bool changed = compute_use(config, *recipe).enabled != entry.use;
    if (!changed) {
      const auto env = build_environment(config, *recipe);
      for (const char* key : rebuild_env_keys) {
        auto now = env.contains(key) ? env.at(key) : std::string{};
        auto then = entry.build_env.contains(key) ? entry.build_env.at(key) : std::string{};
        bool same = std::string_view(key) == "FEATURES" ? same_tokens(now, then) : now == then;
        if (!same) {
          changed = true;
          break;
        }
      }
    }
    if (changed) {
      PackageId id = entry.id;
      id.repository = recipe->id.repository;
      out.push_back(std::move(id));
    }
  }
  return out;
}

std::vector<SlotConflict> check_slot_conflicts(const BuildPlan& plan, const Vdb& vdb) {
  std::map<std::pair<std::string, std::string>, std::vector<Version>> planned;
  for (const auto& a : plan.actions) {
    if (a.host) continue;
    auto& versions = planned[{a.recipe.id.package(), a.recipe.id.slot}];
    if (std::find(versions.begin(), versions.end(), a.recipe.id.version) == versions.end())
      versions.push_back(a.recipe.id.version);
  }
  std::map<std::pair<std::string, std::string>, std::vector<Version>> installed;
  for (const auto& e : vdb.entries()) installed[{e.id.package(), e.id.slot}].push_back(e.id.version);

  std::vector<SlotConflict> out;
  auto report = [&out](const std::pair<std::string, std::string>& key, std::vector<Version> vs) {
    std::sort(vs.begin(), vs.end());
    SlotConflict c{key.first, key.second, {}};
    for (const auto& v : vs) c.versions.push_back(v.str());
    out.push_back(std::move(c));
  };
  for (const auto& [key, versions] : planned) {
    if (versions.size() > 1) report(key, versions);
  }
  for (const auto& [key, versions] : installed) {
    // A planned version replaces whatever is installed in the slot.
    if (versions.size() > 1 && !planned.contains(key)) report(key, versions);
  }
  return out;
}

}  // namespace prefixpm
