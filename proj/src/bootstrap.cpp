#include <prefixpm/bootstrap.hpp>

#include <prefixpm/buildengine.hpp>
#include <prefixpm/errors.hpp>
#include <prefixpm/fsutil.hpp>
#include <prefixpm/resolver.hpp>
#include <prefixpm/vdb.hpp>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace prefixpm {

namespace {

constexpr const char* marker_name = ".bootstrap-stage";
constexpr const char* lock_name = ".bootstrap-lock";

// Held for the whole run; the file goes away with the lock so an
// interrupted and a clean run leave the same tree behind.
class BootstrapLock {
 public:
  explicit BootstrapLock(const fs::path& prefix) : path_(prefix / lock_name) {
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw ConfigError("cannot create " + path_.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw ConfigError("another bootstrap is running in " + prefix.string());
    }
  }
  ~BootstrapLock() {
    std::error_code ec;
    fs::remove(path_, ec);
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  BootstrapLock(const BootstrapLock&) = delete;
  BootstrapLock& operator=(const BootstrapLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

Atom atom(const char* text) { return parse_atom(text); }

fs::path absolute_prefix(const fs::path& prefix) {
  if (!prefix.is_absolute()) throw ConfigError("bootstrap prefix must be absolute: " + prefix.string());
  auto p = prefix.lexically_normal();
  if (!p.has_filename()) p = p.parent_path();
  if (p == p.root_path()) throw ConfigError("refusing to bootstrap into /");
  return p;
}

bool empty_apart_from_lock(const fs::path& prefix) {
  for (const auto& e : sorted_entries(prefix)) {
    if (e.filename() != lock_name) return false;
  }
  return true;
}

void write_marker(const fs::path& prefix, int stage) {
  write_file_atomic(prefix / marker_name, std::to_string(stage) + "\n");
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string make_conf_text(const Config& host) {
  const auto accept = host.accept_keywords();
  std::string out;
  out += "CHOST=\"" + host.cbuild() + "\"\n";
  out += "CBUILD=\"" + host.cbuild() + "\"\n";
  out += "ACCEPT_KEYWORDS=\"" + join({accept.begin(), accept.end()}, " ") + "\"\n";
  out += "FEATURES=\"collision-protect\"\n";
  out += "USE=\"\"\n";
  return out;
}

std::string repos_conf_text(const PackageTree& repos) {
  std::string out;
  for (const auto& r : repos.repositories()) {
    out += r.name + " = " + fs::absolute(r.path).lexically_normal().string() + " " +
           std::to_string(r.priority) + "\n";
  }
  return out;
}

fs::path running_executable() {
  std::error_code ec;
  auto p = fs::read_symlink("/proc/self/exe", ec);
  if (ec) throw BuildError("cannot locate the running executable to install as pm");
  return p;
}

}  // namespace

std::vector<Atom> default_system_set() {
  return {atom("sys-apps/pm-runtime"), atom("sys-devel/toy-cc"), atom("sys-apps/toy-core"),
          atom("app-shells/toy-sh"), atom("sys-libs/toy-libc")};
}

int completed_stage(const fs::path& prefix) {
  std::error_code ec;
  const auto marker = prefix / marker_name;
  if (!fs::is_regular_file(marker, ec)) return 0;
  const auto text = read_file(marker);
  if (text.size() != 2 || text[1] != '\n' || text[0] < '1' || text[0] > '3')
    throw FormatError(marker.string() + ": expected a stage digit and a newline");
  return text[0] - '0';
}

BootstrapPlan plan_bootstrap(const fs::path& prefix, bool rap, const std::vector<Atom>& system_set) {
  BootstrapPlan plan;
  plan.prefix = absolute_prefix(prefix);
  plan.rap = rap;
  std::error_code ec;
  if (fs::exists(plan.prefix, ec)) {
    if (!fs::is_directory(plan.prefix, ec))
      throw ConfigError(plan.prefix.string() + " exists and is not a directory");
    if (!empty_apart_from_lock(plan.prefix) && completed_stage(plan.prefix) == 0)
      throw ConfigError(plan.prefix.string() +
                        " is not empty and holds no bootstrap in progress; refusing to overwrite");
  }
  BootstrapStage stage2{2, {atom("sys-devel/toy-cc")}, Toolchain::host};
  if (rap) stage2.packages.push_back(atom("sys-libs/toy-libc"));
  plan.stages = {
      {1, {atom("sys-apps/pm-runtime")}, Toolchain::host},
      stage2,
      {3, system_set, Toolchain::bootstrapped},
  };
  return plan;
}

BootstrapReport execute_bootstrap(const BootstrapPlan& plan, const PackageTree& repos,
                                  const Config& host_config, const BootstrapOptions& options) {
  const auto& prefix = plan.prefix;
  fs::create_directories(prefix);
  BootstrapLock lock(prefix);
  auto say = [&](const std::string& m) {
    if (options.progress) options.progress(m);
  };

  const int done = completed_stage(prefix);
  if (done == 0) {
    write_file_atomic(prefix / "etc" / "pm" / "make.conf", make_conf_text(host_config));
    write_file_atomic(prefix / "etc" / "pm" / "repos.conf", repos_conf_text(repos));
  } else {
    say("resuming after stage " + std::to_string(done));
  }
  const auto pm_binary = options.pm_binary.empty() ? running_executable() : options.pm_binary;

  BootstrapReport report;
  for (const auto& stage : plan.stages) {
    if (stage.number <= done) continue;
    say("stage " + std::to_string(stage.number));
    const auto config = load_config(prefix, "/", prefix.string());
    auto vdb = Vdb::open("/", prefix.string());

    ExecuteOptions exec;
    exec.targets = stage.packages;
    exec.env_overrides["PM_BINARY"] = pm_binary.string();
    if (stage.toolchain == Toolchain::bootstrapped) {
      const auto cc = prefix / "usr" / "bin" / bootstrapped_cc;
      std::error_code ec;
      if (!fs::is_regular_file(cc, ec))
        throw BuildError("stage " + std::to_string(stage.number) + " needs " + cc.string() +
                         ", which an earlier stage should have installed");
      exec.env_overrides["CC"] = bootstrapped_cc;
    } else {
      exec.env_overrides["CC"] = host_cc_marker;
    }
    exec.on_action = [&](const Action& a) {
      say("  " + a.recipe.id.slotted());
      report.merged.push_back(a.recipe.id.slotted());
    };

    SolveOptions solve_options;
    solve_options.rebuild_targets = stage.toolchain == Toolchain::bootstrapped;
    const auto build = solve(stage.packages, config, nullptr, vdb, repos, solve_options);
    execute_plan(build, config, vdb, exec);

    write_marker(prefix, stage.number);
    report.stages_run.push_back(stage.number);
    if (stage.number == 3) write_startprefix(prefix);
    if (options.stop_after_stage && stage.number >= *options.stop_after_stage) break;
  }
  return report;
}

fs::path write_startprefix(const fs::path& prefix) {
  const auto p = absolute_prefix(prefix);
  if (completed_stage(p) != 3)
    throw BuildError("bootstrap of " + p.string() + " is incomplete; startprefix needs stage 3");
  const auto q = shell_quote(p.string());
  const std::string script =
      "#!/bin/sh\n"
      "# Start a session inside the prefix.\n"
      "EPREFIX=" + q + "\n"
      "export EPREFIX\n"
      "PATH=\"$EPREFIX/usr/bin:$EPREFIX/bin${PATH:+:$PATH}\"\n"
      "export PATH\n"
      "echo \"Entering Prefix $EPREFIX\"\n"
      "if [ $# -gt 0 ]; then\n"
      "  exec \"$@\"\n"
      "fi\n"
      "exec \"${SHELL:-/bin/sh}\"\n";
  const auto path = p / "startprefix";
  write_file_atomic(path, script);
  fs::permissions(path, fs::perms::owner_all | fs::perms::group_read | fs::perms::group_exec |
                            fs::perms::others_read | fs::perms::others_exec);
  return path;
}

}  // namespace prefixpm
