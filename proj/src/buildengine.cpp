#include <prefixpm/buildengine.hpp>

#include <prefixpm/digest.hpp>
#include <prefixpm/errors.hpp>
#include <prefixpm/fsutil.hpp>
#include <prefixpm/patch.hpp>
#include <prefixpm/select.hpp>
#include <prefixpm/textfile.hpp>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <set>
#include <sstream>

namespace prefixpm {

namespace {

constexpr auto copy_opts = fs::copy_options::overwrite_existing | fs::copy_options::recursive |
                           fs::copy_options::copy_symlinks;

fs::path resolve_arg(const BuildContext& ctx, const std::string& arg) {
  fs::path p(arg);
  return p.is_absolute() ? p : ctx.S / p;
}

// Output paths must stay inside S or D. The last component is not followed
// so that make-sym can name the link itself.
fs::path sandboxed(const BuildContext& ctx, const std::string& arg) {
  const auto p = resolve_arg(ctx, arg).lexically_normal();
  auto parent = fs::weakly_canonical(p.parent_path());
  auto real = p.has_filename() ? parent / p.filename() : parent;
  for (const auto& area : {ctx.S, ctx.D}) {
    if (is_within(real, fs::weakly_canonical(area))) return p;
  }
  throw SandboxError("write to " + p.string() + " is outside the build sandbox");
}

CommandResult failed(std::string message, int status = 1) {
  return {status, std::move(message) + "\n"};
}

CommandResult run_toycc(const std::vector<std::string>& args, BuildContext& ctx) {
  std::vector<std::string> inputs;
  std::optional<std::string> output;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "-o") {
      if (i + 1 >= args.size()) return failed("toycc: -o needs an argument", 2);
      output = args[++i];
    } else if (!args[i].starts_with('-')) {
      inputs.push_back(args[i]);
    }
  }
  if (inputs.empty() || !output) return failed("usage: toycc <input>... -o <output>", 2);

  ToyArtifact artifact;
  artifact.machine = ctx.chost;
  artifact.cflags = ctx.env.contains("CFLAGS") ? ctx.env.at("CFLAGS") : "";
  for (const auto& in : inputs) {
    const auto path = resolve_arg(ctx, in);
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) return failed("toycc: " + in + ": no such file");
    const auto text = read_file(path);
    std::istringstream lines(text);
    std::string line;
    for (std::size_t n = 1; std::getline(lines, line); ++n) {
      auto t = trim(line);
      const auto where = in + ":" + std::to_string(n) + ": error: ";
      if (t.starts_with("#error")) return failed(where + std::string(trim(t.substr(6))));
      if (t.starts_with("#machine-error")) {
        auto words = split_words(t.substr(14));
        if (!words.empty() && ctx.chost.find(words[0]) != std::string::npos) {
          words.erase(words.begin());
          return failed(where + join(words, " "));
        }
      }
    }
    artifact.payload += text;
  }
  const auto out = sandboxed(ctx, *output);
  fs::create_directories(out.parent_path());
  write_file_atomic(out, render_toy_artifact(artifact));
  return {};
}

CommandResult run_install_file(const std::vector<std::string>& args, BuildContext& ctx) {
  if (args.size() != 3) return failed("usage: install-file <src> <dst>", 2);
  const auto src = resolve_arg(ctx, args[1]);
  std::error_code ec;
  if (!fs::exists(src, ec)) return failed("install-file: " + args[1] + ": no such file");
  const auto dst = sandboxed(ctx, args[2]);
  fs::create_directories(dst.parent_path());
  fs::copy(src, dst, copy_opts);
  return {};
}

CommandResult run_make_dir(const std::vector<std::string>& args, BuildContext& ctx) {
  if (args.size() < 2) return failed("usage: make-dir <dir>...", 2);
  for (std::size_t i = 1; i < args.size(); ++i) fs::create_directories(sandboxed(ctx, args[i]));
  return {};
}

CommandResult run_make_sym(const std::vector<std::string>& args, BuildContext& ctx) {
  if (args.size() != 3) return failed("usage: make-sym <target> <link>", 2);
  const auto link = sandboxed(ctx, args[2]);
  fs::create_directories(link.parent_path());
  std::error_code ec;
  fs::remove(link, ec);
  fs::create_symlink(args[1], link);
  return {};
}

CommandResult run_echo_to(const std::vector<std::string>& args, BuildContext& ctx) {
  if (args.size() < 2) return failed("usage: echo-to <file> <text>...", 2);
  const auto file = sandboxed(ctx, args[1]);
  fs::create_directories(file.parent_path());
  write_file_atomic(file, join({args.begin() + 2, args.end()}, " ") + "\n");
  return {};
}

std::optional<std::string> find_program(const std::string& name, const BuildContext& ctx) {
  if (name.find('/') != std::string::npos) return resolve_arg(ctx, name).string();
  std::string path;
  if (auto it = ctx.env.find("PATH"); it != ctx.env.end()) path = it->second;
  else if (const char* p = std::getenv("PATH")) path = p;
  std::istringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) continue;
    auto candidate = fs::path(dir) / name;
    if (::access(candidate.c_str(), X_OK) == 0 && !fs::is_directory(candidate))
      return candidate.string();
  }
  return std::nullopt;
}

CommandResult run_external(const std::vector<std::string>& args, BuildContext& ctx) {
  const auto program = find_program(args[0], ctx);
  if (!program) return failed(args[0] + ": command not found", 127);

  std::vector<std::string> env_strings;
  for (const auto& [k, v] : ctx.env) env_strings.push_back(k + "=" + v);
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  std::vector<char*> envp;
  for (auto& e : env_strings) envp.push_back(e.data());
  envp.push_back(nullptr);

  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) return failed(std::string("pipe: ") + std::strerror(errno));
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    return failed(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(fds[1], 1);
    ::dup2(fds[1], 2);
    if (::chdir(ctx.S.c_str()) != 0) ::_exit(126);
    ::execve(program->c_str(), argv.data(), envp.data());
    ::_exit(127);
  }
  ::close(fds[1]);
  CommandResult result;
  char buf[4096];
  for (;;) {
    auto n = ::read(fds[0], buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    result.output.append(buf, static_cast<std::size_t>(n));
  }
  ::close(fds[0]);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  result.status = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return result;
}

void copy_tree_item(const fs::path& from, const fs::path& to) {
  fs::create_directories(to.parent_path());
  fs::copy(from, to, copy_opts);
}

void run_lines(const Recipe& recipe, const std::string& phase, BuildContext& ctx) {
  auto it = recipe.phases.find(phase);
  if (it == recipe.phases.end()) return;
  for (const auto& line : it->second) {
    CommandResult r;
    try {
      r = interpret_command(line.text, ctx);
    } catch (const SandboxError& e) {
      throw SandboxError(recipe.id.str() + ": phase " + phase + " line " +
                         std::to_string(line.line) + ": " + e.what());
    } catch (const ParseError& e) {
      throw PhaseError(phase, line.line, e.what(), "");
    }
    if (r.status != 0) {
      auto message = r.output;
      while (!message.empty() && message.back() == '\n') message.pop_back();
      if (auto nl = message.rfind('\n'); nl != std::string::npos) message = message.substr(nl + 1);
      if (message.empty()) message = "exit status " + std::to_string(r.status);
      throw PhaseError(phase, line.line, message, r.output);
    }
  }
}

void apply_patch_file(const fs::path& file, const BuildContext& ctx) {
  std::error_code ec;
  if (!fs::is_regular_file(file, ec))
    throw PhaseError("prepare", 0, "missing patch " + file.string(), "");
  try {
    apply_patch(read_file(file), ctx.S);
  } catch (const Error& e) {
    throw PhaseError("prepare", 0, file.filename().string() + ": " + e.what(), "");
  }
}

bool has_feature(const BuildContext& ctx, std::string_view feature) {
  auto it = ctx.env.find("FEATURES");
  if (it == ctx.env.end()) return false;
  auto words = split_words(it->second);
  return std::find(words.begin(), words.end(), feature) != words.end();
}

struct Staged {
  ContentKind kind;
  fs::path source;
  std::string path;
  std::string target;
};

void walk_image(const fs::path& dir, const std::string& rel, std::vector<Staged>& out) {
  for (const auto& entry : sorted_entries(dir)) {
    const auto path = rel + "/" + entry.filename().string();
    const auto st = fs::symlink_status(entry);
    if (fs::is_symlink(st)) {
      out.push_back({ContentKind::sym, entry, path, fs::read_symlink(entry).string()});
    } else if (fs::is_directory(st)) {
      out.push_back({ContentKind::dir, entry, path, {}});
      walk_image(entry, path, out);
    } else if (fs::is_regular_file(st)) {
      out.push_back({ContentKind::obj, entry, path, {}});
    } else {
      throw BuildError("unsupported file type in image: " + entry.string());
    }
  }
}

bool is_ancestor_or_same(const std::string& dir, const std::string& path) {
  return path == dir || path.starts_with(dir + "/");
}

std::vector<Staged> staged_items(const Recipe& recipe, const BuildContext& ctx) {
  std::vector<Staged> raw;
  walk_image(ctx.D, "", raw);
  const auto& e = ctx.eprefix;
  std::vector<Staged> items;
  std::set<std::string> dirs;
  for (auto& item : raw) {
    if (!e.empty() && item.kind == ContentKind::dir && is_ancestor_or_same(item.path, e)) continue;
    if (!e.empty() && !item.path.starts_with(e + "/"))
      throw BuildError(recipe.id.str() + " installs " + item.path + " outside the prefix " + e);
    if (item.kind == ContentKind::dir) dirs.insert(item.path);
    items.push_back(std::move(item));
  }
  if (has_feature(ctx, "splitdebug")) {
    const std::string debug_root = e + "/usr/lib/debug";
    std::vector<Staged> extra;
    for (auto& item : items) {
      if (item.kind != ContentKind::obj || !item.path.ends_with(".debug") ||
          item.path.starts_with(debug_root + "/"))
        continue;
      item.path = debug_root + item.path.substr(e.size());
      for (auto parent = fs::path(item.path).parent_path().generic_string();
           parent.size() > e.size() && !dirs.contains(parent);
           parent = fs::path(parent).parent_path().generic_string()) {
        dirs.insert(parent);
        extra.push_back({ContentKind::dir, {}, parent, {}});
      }
    }
    items.insert(items.end(), extra.begin(), extra.end());
  }
  std::sort(items.begin(), items.end(),
            [](const Staged& a, const Staged& b) { return a.path < b.path; });
  return items;
}

fs::path on_root(const Vdb& vdb, const std::string& path) {
  return vdb.root() / fs::path(path).relative_path();
}

bool claimed_elsewhere(const Vdb& vdb, const std::string& path,
                       const std::set<std::string>& ignore) {
  for (const auto* owner : vdb.owners(path)) {
    if (!ignore.contains(owner->id.str())) return true;
  }
  return false;
}

// Removes an entry's files, leaving modified files, files claimed by other
// entries and paths in `keep`.
std::vector<std::string> remove_contents(const Vdb& vdb, const VdbEntry& entry,
                                         const std::set<std::string>& ignore_owners,
                                         const std::set<std::string>& keep) {
  std::vector<std::string> removed;
  std::vector<const ContentEntry*> dirs;
  for (const auto& c : entry.contents) {
    if (keep.contains(c.path) || claimed_elsewhere(vdb, c.path, ignore_owners)) continue;
    const auto p = on_root(vdb, c.path);
    std::error_code ec;
    const auto st = fs::symlink_status(p, ec);
    switch (c.kind) {
      case ContentKind::dir:
        dirs.push_back(&c);
        break;
      case ContentKind::obj:
        if (!fs::is_regular_file(st)) break;
        if (sha256_file(p) != c.digest) {
          warn("keeping " + c.path + ": contents changed since it was installed");
          break;
        }
        fs::remove(p);
        removed.push_back(c.path);
        break;
      case ContentKind::sym:
        if (!fs::is_symlink(st)) break;
        if (fs::read_symlink(p).string() != c.target) {
          warn("keeping " + c.path + ": link target changed since it was installed");
          break;
        }
        fs::remove(p);
        removed.push_back(c.path);
        break;
    }
  }
  std::sort(dirs.begin(), dirs.end(),
            [](const ContentEntry* a, const ContentEntry* b) { return a->path > b->path; });
  for (const auto* c : dirs) {
    const auto p = on_root(vdb, c->path);
    std::error_code ec;
    if (fs::is_directory(fs::symlink_status(p, ec)) && fs::is_empty(p, ec)) {
      fs::remove(p, ec);
      if (!ec) removed.push_back(c->path);
    }
  }
  return removed;
}

struct UndoStep {
  fs::path path;
  std::optional<fs::path> backup;
  bool created_dir = false;
};

void roll_back(const std::vector<UndoStep>& steps) {
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    std::error_code ec;
    if (it->created_dir) {
      fs::remove(it->path, ec);
      continue;
    }
    fs::remove(it->path, ec);
    if (it->backup) fs::copy(*it->backup, it->path, fs::copy_options::copy_symlinks, ec);
  }
}

}  // namespace

BuildArea::BuildArea() : dir_("prefix-pm-build") {
  fs::create_directories(work());
  fs::create_directories(image());
  fs::create_directories(distfiles());
}

BuildContext make_context(const Config& config, const Recipe& recipe, const BuildArea& area) {
  const auto base = install_base(config.root, config.eprefix);
  if (base != "/" && is_within(fs::weakly_canonical(area.path()), fs::weakly_canonical(base)))
    throw BuildError("build directory " + area.path().string() + " lies inside the target " +
                     base.string() + "; point TMPDIR elsewhere");
  BuildContext ctx;
  ctx.S = area.work();
  ctx.D = area.image();
  ctx.distfiles = area.distfiles();
  ctx.use = compute_use(config, recipe);
  ctx.env = build_environment(config, recipe);
  ctx.target_root = config.root;
  ctx.eprefix = config.eprefix;
  ctx.chost = config.chost();
  ctx.cbuild = config.cbuild();
  ctx.user_patches = find_user_patches(config, recipe.id);
  ctx.env["S"] = ctx.S.string();
  ctx.env["D"] = ctx.D.string();
  ctx.env["USE"] = join({ctx.use.enabled.begin(), ctx.use.enabled.end()}, " ");
  ctx.env["CHOST"] = ctx.chost;
  ctx.env["CBUILD"] = ctx.cbuild;
  ctx.env["CATEGORY"] = recipe.id.category;
  ctx.env["PN"] = recipe.id.name;
  ctx.env["PV"] = recipe.id.version.str();
  ctx.env["SLOT"] = recipe.id.slot;
  if (!recipe.dir.empty()) ctx.env["FILESDIR"] = (recipe.dir / "files").string();
  return ctx;
}

std::string render_toy_artifact(const ToyArtifact& artifact) {
  return std::string(toy_magic) + "\nMACHINE: " + artifact.machine + "\nCFLAGS: " +
         artifact.cflags + "\n\n" + artifact.payload;
}

ToyArtifact parse_toy_artifact(std::string_view bytes, std::string_view origin) {
  auto bad = [&](const std::string& what) {
    return FormatError(std::string(origin) + ": not a toy artifact (" + what + ")");
  };
  if (!bytes.starts_with(std::string(toy_magic) + "\n")) throw bad("bad magic");
  bytes.remove_prefix(toy_magic.size() + 1);
  auto take_line = [&](std::string_view key) {
    auto nl = bytes.find('\n');
    if (nl == std::string_view::npos || !bytes.substr(0, nl).starts_with(key))
      throw bad("missing " + std::string(key) + " header");
    auto value = bytes.substr(key.size(), nl - key.size());
    bytes.remove_prefix(nl + 1);
    return std::string(value);
  };
  ToyArtifact a;
  a.machine = take_line("MACHINE: ");
  a.cflags = take_line("CFLAGS: ");
  if (!bytes.starts_with('\n')) throw bad("missing blank line after headers");
  a.payload = std::string(bytes.substr(1));
  return a;
}

std::string inspect_machine(const fs::path& file) {
  std::error_code ec;
  if (!fs::is_regular_file(file, ec)) throw FormatError(file.string() + ": not a regular file");
  std::string bytes;
  try {
    bytes = read_file(file);
  } catch (const Error&) {
    throw FormatError("cannot read " + file.string());
  }
  return parse_toy_artifact(bytes, file.string()).machine;
}

CommandResult interpret_command(std::string_view line, BuildContext& ctx) {
  const auto args = split_command(line, [&ctx](std::string_view name) -> std::optional<std::string> {
    auto it = ctx.env.find(std::string(name));
    if (it == ctx.env.end()) return std::nullopt;
    return it->second;
  });
  if (args.empty()) return {};
  const auto& cmd = args[0];
  if (cmd == "toycc") return run_toycc(args, ctx);
  if (cmd == "install-file") return run_install_file(args, ctx);
  if (cmd == "make-dir") return run_make_dir(args, ctx);
  if (cmd == "make-sym") return run_make_sym(args, ctx);
  if (cmd == "echo-to") return run_echo_to(args, ctx);
  if (cmd == "fail") return failed(args.size() > 1 ? join({args.begin() + 1, args.end()}, " ") : "fail");
  return run_external(args, ctx);
}

void run_phases(const Recipe& recipe, BuildContext& ctx) {
  fs::create_directories(ctx.S);
  fs::create_directories(ctx.D);
  const auto cache = ctx.distfiles / (recipe.id.name + "-" + recipe.id.version.str());
  for (const char* phase : phase_names) {
    const std::string name = phase;
    if (name == "fetch") {
      for (const auto& src : recipe.src) {
        const auto from = recipe.dir / src;
        std::error_code ec;
        if (recipe.dir.empty() || !fs::exists(from, ec))
          throw PhaseError("fetch", 0, "missing source file " + from.string(), "");
        copy_tree_item(from, cache / src);
      }
    } else if (name == "unpack") {
      for (const auto& src : recipe.src) copy_tree_item(cache / src, ctx.S / src);
    } else if (name == "prepare") {
      for (const auto& p : recipe.bundled_patches) apply_patch_file(recipe.dir / p, ctx);
      for (const auto& p : ctx.user_patches) apply_patch_file(p, ctx);
    }
    run_lines(recipe, name, ctx);
  }
}

VdbEntry merge(const Recipe& recipe, const BuildContext& ctx, Vdb& vdb,
               const MergeRequest& request) {
  const auto items = staged_items(recipe, ctx);
  const auto package = recipe.id.package();

  for (const auto& item : items) {
    const auto dest = on_root(vdb, item.path);
    std::error_code ec;
    const auto st = fs::symlink_status(dest, ec);
    if (!fs::exists(st)) continue;
    if (item.kind == ContentKind::dir) {
      if (!fs::is_directory(fs::status(dest, ec)))
        throw BuildError("cannot merge directory " + item.path + " over a file");
      continue;
    }
    for (const auto* owner : vdb.owners(item.path)) {
      if (owner->id.package() != package) throw CollisionError(item.path, owner->id.str());
    }
    if (fs::is_directory(st)) throw BuildError("cannot merge " + item.path + " over a directory");
  }

  VdbEntry entry;
  entry.id = recipe.id;
  entry.use = ctx.use.enabled;
  entry.chost = ctx.chost;
  for (const char* key : build_env_snapshot_keys) {
    if (auto it = ctx.env.find(key); it != ctx.env.end()) entry.build_env[key] = it->second;
  }
  entry.depend = recipe.depend;
  entry.rdepend = recipe.rdepend;
  entry.pdepend = recipe.pdepend;
  entry.reason = std::string(reason_name(request.reason));

  TempDir backups("prefix-pm-undo");
  std::vector<UndoStep> undo;
  std::size_t backup_count = 0;
  try {
    for (const auto& item : items) {
      const auto dest = on_root(vdb, item.path);
      std::error_code ec;
      const bool present = fs::exists(fs::symlink_status(dest, ec));
      if (item.kind == ContentKind::dir) {
        if (!present) {
          fs::create_directories(dest.parent_path());
          fs::create_directory(dest);
          undo.push_back({dest, std::nullopt, true});
        }
        entry.contents.push_back({ContentKind::dir, item.path, {}, {}});
        continue;
      }
      UndoStep step{dest, std::nullopt, false};
      if (present) {
        step.backup = backups.path() / std::to_string(backup_count++);
        fs::copy(dest, *step.backup, fs::copy_options::copy_symlinks);
      }
      undo.push_back(step);
      fs::create_directories(dest.parent_path());
      if (item.kind == ContentKind::sym) {
        fs::remove(dest, ec);
        fs::create_symlink(item.target, dest);
        entry.contents.push_back({ContentKind::sym, item.path, {}, item.target});
      } else {
        auto tmp = dest;
        tmp += ".pm-merge";
        fs::copy_file(item.source, tmp, fs::copy_options::overwrite_existing);
        fs::rename(tmp, dest);
        entry.contents.push_back({ContentKind::obj, item.path, sha256_file(dest), {}});
      }
    }
  } catch (...) {
    roll_back(undo);
    throw;
  }

  if (const auto* old = vdb.find_slot(recipe.id.category, recipe.id.name, recipe.id.slot)) {
    const VdbEntry previous = *old;
    std::set<std::string> keep;
    for (const auto& c : entry.contents) keep.insert(c.path);
    remove_contents(vdb, previous, {previous.id.str()}, keep);
    if (previous.reason == "target" || request.reason == ActionReason::changed_use_rebuild)
      entry.reason = previous.reason;
    if (previous.id.version != recipe.id.version) vdb.remove(previous.id);
  }
  vdb.write(entry);
  if (request.reason == ActionReason::target && !request.world_atom.empty())
    vdb.add_world(request.world_atom);
  return entry;
}

std::vector<std::string> unmerge(const PackageId& id, Vdb& vdb) {
  const auto* found = vdb.find(id.category, id.name, id.version);
  if (!found) throw ResolutionError(id.str() + " is not installed");
  const VdbEntry entry = *found;
  auto removed = remove_contents(vdb, entry, {entry.id.str()}, {});
  clear_if_active(vdb, entry.id);
  vdb.remove(entry.id);
  vdb.remove_world(entry.id.package() + ":" + entry.id.slot);
  if (vdb.find_package(entry.id.category, entry.id.name).empty())
    vdb.remove_world(entry.id.package());
  return removed;
}

std::string world_atom_for(const Recipe& recipe, const std::vector<Atom>& targets) {
  for (const auto& t : targets) {
    if (t.name != recipe.id.name || (t.category && *t.category != recipe.id.category)) continue;
    if (t.slot) return recipe.id.package() + ":" + recipe.id.slot;
    return recipe.id.package();
  }
  return recipe.id.package();
}

void execute_plan(const BuildPlan& plan, const Config& config, Vdb& vdb,
                  const ExecuteOptions& options) {
  for (const auto& action : plan.actions) {
    if (options.on_action) options.on_action(action);
    if (action.host && (!options.host_config || !options.host_vdb))
      throw ResolutionError(action.recipe.id.str() + " must be built for the host, but no host "
                            "prefix is configured");
    const Config& cfg = action.host ? *options.host_config : config;
    Vdb& target = action.host ? *options.host_vdb : vdb;

    BuildArea area;
    auto ctx = make_context(cfg, action.recipe, area);
    ctx.use = action.use;
    ctx.env["USE"] = join({action.use.enabled.begin(), action.use.enabled.end()}, " ");
    for (const auto& [k, v] : options.env_overrides) ctx.env[k] = v;
    run_phases(action.recipe, ctx);

    fs::create_directories(target.base());
    FileLock lock(target.base());
    MergeRequest request{action.reason, action.reason == ActionReason::target
                                            ? world_atom_for(action.recipe, options.targets)
                                            : std::string{}};
    merge(action.recipe, ctx, target, request);
  }
}

}  // namespace prefixpm
