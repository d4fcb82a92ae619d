#include <prefixpm/cli.hpp>

#include <prefixpm/bootstrap.hpp>
#include <prefixpm/buildengine.hpp>
#include <prefixpm/config.hpp>
#include <prefixpm/errors.hpp>
#include <prefixpm/fsutil.hpp>
#include <prefixpm/repository.hpp>
#include <prefixpm/resolver.hpp>
#include <prefixpm/select.hpp>
#include <prefixpm/vdb.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <set>

#ifndef PREFIXPM_DEFAULT_TREE
#define PREFIXPM_DEFAULT_TREE "/usr/share/prefix-pm/tree"
#endif

namespace prefixpm::cli {

namespace {

struct Flags {
  std::string root;
  std::string config_root;
  std::string prefix;
  bool pretend = false;
  bool changed_use = false;
  bool interactive = false;
  bool libc = false;
};

struct Roots {
  fs::path root;
  std::string eprefix;
  fs::path config_root;
};

std::string ambient_prefix() {
  const char* ep = std::getenv("EPREFIX");
  return ep ? std::string(ep) : std::string{};
}

// Inside a startprefix session EPREFIX supplies the defaults; elsewhere a
// mutating command must name its root.
Roots resolve_roots(const Flags& f, bool mutating) {
  const auto ambient = ambient_prefix();
  Roots r;
  if (!f.root.empty()) r.root = f.root;
  else if (!ambient.empty() || !mutating) r.root = "/";
  else throw ConfigError("--root is required outside a prefix session");
  r.eprefix = normalize_eprefix(!f.prefix.empty() ? f.prefix : ambient);
  r.config_root = !f.config_root.empty() ? fs::path(f.config_root) : install_base(r.root, r.eprefix);
  return r;
}

PackageTree load_tree(const fs::path& config_root) {
  return PackageTree::load(load_repositories(config_root));
}

bool confirm(std::istream& in, std::ostream& err, const std::string& question) {
  err << question << " [y/N] " << std::flush;
  std::string answer;
  if (!std::getline(in, answer)) return false;
  return answer == "y" || answer == "Y" || answer == "yes";
}

std::vector<Atom> expand_targets(const std::vector<std::string>& words, const Vdb& vdb) {
  std::vector<Atom> out;
  for (const auto& w : words) {
    if (w == "@world") {
      for (const auto& a : vdb.world()) out.push_back(parse_atom(a));
    } else if (w == "@system") {
      for (auto& a : default_system_set()) out.push_back(std::move(a));
    } else if (w.starts_with('@')) {
      throw ParseError("unknown set '" + w + "'");
    } else {
      out.push_back(parse_atom(w));
    }
  }
  return out;
}

int cmd_merge(const Flags& f, const std::vector<std::string>& words, std::istream& in,
              std::ostream& out, std::ostream& err) {
  const auto roots = resolve_roots(f, !f.pretend);
  const auto config = load_config(roots.config_root, roots.root, roots.eprefix);
  const auto repos = load_tree(roots.config_root);
  auto vdb = Vdb::open(roots.root, roots.eprefix);
  const auto targets = expand_targets(words, vdb);
  if (targets.empty() && !f.changed_use) throw ParseError("merge: no atoms given");

  // The build host is the ambient prefix (or /) when it has a configuration.
  std::optional<Config> host_config;
  std::optional<Vdb> host_vdb;
  if (config.is_cross()) {
    const auto host_prefix = normalize_eprefix(ambient_prefix());
    const auto host_base = install_base("/", host_prefix);
    std::error_code ec;
    if (fs::is_regular_file(host_base / "etc" / "pm" / "make.conf", ec))
      host_config = load_config(host_base, "/", host_prefix);
    host_vdb = Vdb::open("/", host_prefix);
  }

  SolveOptions options;
  if (host_config) options.host_config = &*host_config;
  if (f.changed_use) options.rebuilds = changed_use_rebuilds(config, vdb, repos);
  const auto plan = solve(targets, config, host_vdb ? &*host_vdb : nullptr, vdb, repos, options);
  out << plan.render() << std::flush;
  if (plan.empty()) {
    err << "Nothing to merge.\n";
    return 0;
  }
  if (f.pretend) return 0;
  if (f.interactive && !confirm(in, err, "Merge " + std::to_string(plan.actions.size()) + " package(s)?")) {
    err << "Aborted.\n";
    return 0;
  }
  ExecuteOptions exec;
  exec.targets = targets;
  if (host_config) exec.host_config = &*host_config;
  if (host_vdb) exec.host_vdb = &*host_vdb;
  exec.on_action = [&err](const Action& a) {
    err << ">>> " << (a.host ? "host " : "") << a.recipe.id.slotted() << "\n";
  };
  execute_plan(plan, config, vdb, exec);
  return 0;
}

int cmd_unmerge(const Flags& f, const std::vector<std::string>& words, std::istream& in,
                std::ostream& out, std::ostream& err) {
  const auto roots = resolve_roots(f, !f.pretend);
  auto vdb = Vdb::open(roots.root, roots.eprefix);
  if (words.empty()) throw ParseError("unmerge: no atoms given");
  std::vector<PackageId> ids;
  for (const auto& w : words) {
    const auto atom = parse_atom(w);
    auto matches = vdb.match(atom);
    if (matches.empty()) throw ResolutionError("no installed package matches '" + w + "'");
    std::set<std::string> categories;
    for (const auto* e : matches) categories.insert(e->id.category);
    if (categories.size() > 1) {
      std::vector<std::string> names;
      for (const auto& c : categories) names.push_back(c + "/" + atom.name);
      throw AmbiguityError(atom.name, names);
    }
    for (const auto* e : matches) ids.push_back(e->id);
  }
  for (const auto& id : ids) out << id.slotted() << "\n";
  if (f.pretend) return 0;
  if (f.interactive && !confirm(in, err, "Unmerge " + std::to_string(ids.size()) + " package(s)?")) {
    err << "Aborted.\n";
    return 0;
  }
  FileLock lock(vdb.base());
  for (const auto& id : ids) unmerge(id, vdb);
  return 0;
}

void print_depgraph(const Recipe& recipe, const Config& config, const PackageTree& repos,
                    std::size_t depth, std::set<std::string>& seen, std::ostream& out) {
  const auto deps = expand_dependencies(recipe, compute_use(config, recipe));
  const std::pair<const char*, const std::vector<Atom>*> kinds[] = {
      {"depend", &deps.depend}, {"rdepend", &deps.rdepend}, {"pdepend", &deps.pdepend}};
  for (const auto& [kind, atoms] : kinds) {
    for (const auto& atom : *atoms) {
      const auto& dep = repos.best_match(atom, config.accept_keywords());
      const bool again = !seen.insert(dep.id.str()).second;
      out << std::string(2 * depth, ' ') << kind << " " << dep.id.slotted()
          << (again ? " (see above)" : "") << "\n";
      if (!again) print_depgraph(dep, config, repos, depth + 1, seen, out);
    }
  }
}

int cmd_query_depgraph(const Flags& f, const std::string& text, std::ostream& out) {
  const auto roots = resolve_roots(f, false);
  const auto config = load_config(roots.config_root, roots.root, roots.eprefix);
  const auto repos = load_tree(roots.config_root);
  const auto& recipe = repos.best_match(parse_atom(text), config.accept_keywords());
  out << recipe.id.slotted() << "\n";
  std::set<std::string> seen{recipe.id.str()};
  print_depgraph(recipe, config, repos, 1, seen, out);
  return 0;
}

int cmd_query_installed(Flags f, const std::string& root, std::ostream& out) {
  if (!root.empty()) f.root = root;
  const auto roots = resolve_roots(f, false);
  const auto vdb = Vdb::open(roots.root, roots.eprefix);
  for (const auto& e : vdb.entries()) out << e.id.slotted() << "\n";
  return 0;
}

int cmd_query_owns(const Flags& f, const std::string& path, std::ostream& out) {
  const auto roots = resolve_roots(f, false);
  const auto vdb = Vdb::open(roots.root, roots.eprefix);
  auto p = fs::absolute(path).lexically_normal();
  const auto root = fs::absolute(roots.root).lexically_normal();
  std::string key = p.generic_string();
  if (root != root.root_path()) {
    if (!is_within(p, root)) throw ResolutionError(path + " is not under " + root.string());
    key = "/" + p.lexically_relative(root).generic_string();
  }
  const auto owners = vdb.owners(key);
  if (owners.empty()) throw ResolutionError("no installed package owns " + key);
  for (const auto* e : owners) out << e->id.str() << "\n";
  return 0;
}

int cmd_select(const Flags& f, const std::string& action, const std::string& module,
               const std::string& provider, std::ostream& out) {
  const auto roots = resolve_roots(f, action == "set");
  const auto vdb = Vdb::open(roots.root, roots.eprefix);
  const auto listing = select_list(vdb, module);
  if (action == "list") {
    for (const auto& p : listing.providers)
      out << p.slotted() << (listing.active && listing.active->str() == p.str() ? " *" : "")
          << "\n";
  } else if (action == "show") {
    out << (listing.active ? listing.active->slotted() : std::string("(none)")) << "\n";
  } else {
    if (provider.empty()) throw ParseError("select set: provider atom required");
    const auto found = find_provider(listing, parse_atom(provider));
    if (!found) throw ResolutionError(provider + " is not an installed provider of " + module);
    select_set(vdb, module, *found);
    out << module << " -> " << found->slotted() << "\n";
  }
  return 0;
}

int cmd_overlay(const Flags& f, const std::string& action, const std::vector<std::string>& args,
                std::ostream& out) {
  const auto roots = resolve_roots(f, action == "add");
  if (action == "list") {
    for (const auto& r : load_repositories(roots.config_root))
      out << r.name << " " << r.path.string() << " " << r.priority << "\n";
    return 0;
  }
  if (args.size() < 2 || args.size() > 3) throw ParseError("usage: overlay add <name> <path> [priority]");
  int priority = default_overlay_priority;
  if (args.size() == 3) {
    try {
      std::size_t used = 0;
      priority = std::stoi(args[2], &used);
      if (used != args[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("overlay priority must be an integer: " + args[2]);
    }
  }
  add_overlay(roots.config_root, args[0], fs::absolute(args[1]).lexically_normal(), priority);
  out << "added overlay " << args[0] << "\n";
  return 0;
}

int cmd_bootstrap(const Flags& f, std::istream& in, std::ostream& out, std::ostream& err) {
  const std::string prefix = !f.prefix.empty() ? f.prefix : ambient_prefix();
  if (prefix.empty()) throw ConfigError("bootstrap: --prefix is required");
  Config host = empty_config();
  PackageTree repos;
  if (!f.config_root.empty()) {
    host = load_config(f.config_root, "/", "");
    repos = load_tree(f.config_root);
  } else {
    repos = PackageTree::load({Repository{"main", PREFIXPM_DEFAULT_TREE, 0}});
  }
  const auto plan = plan_bootstrap(fs::absolute(prefix), f.libc, default_system_set());
  for (const auto& stage : plan.stages) {
    std::vector<std::string> names;
    for (const auto& a : stage.packages) names.push_back(a.str());
    out << "stage " << stage.number << " ("
        << (stage.toolchain == Toolchain::host ? "host toolchain" : "bootstrapped toolchain")
        << "): " << join(names, " ") << "\n";
  }
  if (f.pretend) return 0;
  if (f.interactive && !confirm(in, err, "Bootstrap " + plan.prefix.string() + "?")) {
    err << "Aborted.\n";
    return 0;
  }
  BootstrapOptions options;
  options.progress = [&err](const std::string& m) { err << ">>> " << m << "\n"; };
  const auto report = execute_bootstrap(plan, repos, host, options);
  for (int s : report.stages_run) out << "stage " << s << " complete\n";
  out << "run " << (plan.prefix / "startprefix").string() << " to enter the prefix\n";
  return 0;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  out << "Machine: " << inspect_machine(path) << "\n";
  return 0;
}

class WarningsTo {
 public:
  explicit WarningsTo(std::ostream& err) {
    set_warning_sink([&err](const std::string& m) { err << "warning: " << m << "\n"; });
  }
  ~WarningsTo() { set_warning_sink(nullptr); }
};

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err) {
  WarningsTo warnings(err);
  CLI::App app{"prefix-pm: a small source-based package manager", "pm"};
  app.fallthrough();
  app.require_subcommand(1);

  Flags f;
  app.add_option("--root", f.root, "Target root receiving installs");
  app.add_option("--config-root", f.config_root, "Directory holding etc/pm");
  app.add_option("--prefix", f.prefix, "Installation offset inside the root");
  app.add_flag("--pretend", f.pretend, "Show what would be done");
  app.add_flag("--changed-use", f.changed_use, "Rebuild packages whose USE or flags changed");
  app.add_flag("--interactive", f.interactive, "Ask before acting");
  app.add_flag("--libc", f.libc, "Bootstrap also builds its own libc");

  std::vector<std::string> atoms;
  auto* merge = app.add_subcommand("merge", "Build and install packages");
  merge->add_option("atoms", atoms, "Atoms, @world or @system");
  auto* unmerge_cmd = app.add_subcommand("unmerge", "Remove installed packages");
  unmerge_cmd->add_option("atoms", atoms, "Installed atoms")->required();

  auto* query = app.add_subcommand("query", "Inspect the tree and the installed database");
  query->require_subcommand(1);
  std::string query_arg;
  auto* depgraph = query->add_subcommand("depgraph", "Show the dependency graph of an atom");
  depgraph->add_option("atom", query_arg)->required();
  auto* installed = query->add_subcommand("installed", "List installed packages");
  installed->add_option("root", query_arg);
  auto* owns = query->add_subcommand("owns", "Find the package owning a path");
  owns->add_option("path", query_arg)->required();

  auto* select = app.add_subcommand("select", "Choose the active provider of a module");
  std::string select_action;
  std::string module;
  std::string provider;
  select->add_option("action", select_action)->required()->check(CLI::IsMember({"list", "show", "set"}));
  select->add_option("module", module)->required();
  select->add_option("provider", provider);

  auto* overlay = app.add_subcommand("overlay", "Manage overlays");
  std::string overlay_action;
  std::vector<std::string> overlay_args;
  overlay->add_option("action", overlay_action)->required()->check(CLI::IsMember({"add", "list"}));
  overlay->add_option("args", overlay_args);

  auto* bootstrap = app.add_subcommand("bootstrap", "Bootstrap a new prefix");
  auto* inspect = app.add_subcommand("inspect", "Print the machine of a built artifact");
  std::string inspect_path;
  inspect->add_option("path", inspect_path)->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*merge) return cmd_merge(f, atoms, in, out, err);
    if (*unmerge_cmd) return cmd_unmerge(f, atoms, in, out, err);
    if (*depgraph) return cmd_query_depgraph(f, query_arg, out);
    if (*installed) return cmd_query_installed(f, query_arg, out);
    if (*owns) return cmd_query_owns(f, query_arg, out);
    if (*select) return cmd_select(f, select_action, module, provider, out);
    if (*overlay) {
      if (overlay_action == "list" && !overlay_args.empty())
        throw ParseError("usage: overlay list");
      return cmd_overlay(f, overlay_action, overlay_args, out);
    }
    if (*bootstrap) return cmd_bootstrap(f, in, out, err);
    if (*inspect) return cmd_inspect(inspect_path, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    if (const auto* phase = dynamic_cast<const PhaseError*>(&e); phase && !phase->output().empty())
      err << phase->output();
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(ErrorKind::build);
  }
  return 2;
}

}  // namespace prefixpm::cli
