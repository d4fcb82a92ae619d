#include "support.hpp"

#include <prefixpm/digest.hpp>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <sstream>
#include <stdexcept>

extern char** environ;

namespace testsupport {

fs::path fixtures() { return PREFIXPM_FIXTURES; }
fs::path tree() { return fixtures() / "tree"; }
fs::path overlay(const std::string& name) { return fixtures() / "overlays" / name; }
fs::path pm_binary() { return PREFIXPM_PM_BINARY; }

void write_repos_conf(const fs::path& config_root, const std::vector<RepoLine>& repos) {
  std::string text;
  for (const auto& r : repos)
    text += r.name + " = " + r.path.string() + " " + std::to_string(r.priority) + "\n";
  prefixpm::write_file_atomic(config_root / "etc" / "pm" / "repos.conf", text);
}

void install_config(const std::string& name, const fs::path& config_root) {
  fs::create_directories(config_root);
  fs::copy(fixtures() / "configs" / name, config_root, fs::copy_options::recursive);
  write_repos_conf(config_root, {{"main", tree(), 0}});
}

Snapshot snapshot(const fs::path& dir) {
  Snapshot out;
  std::error_code ec;
  if (!fs::exists(dir, ec)) return out;
  for (auto it = fs::recursive_directory_iterator(dir); it != fs::recursive_directory_iterator(); ++it) {
    const auto rel = it->path().lexically_relative(dir).generic_string();
    const auto st = it->symlink_status();
    if (fs::is_symlink(st)) {
      out[rel] = "link " + fs::read_symlink(it->path()).string();
    } else if (fs::is_directory(st)) {
      out[rel] = "dir";
    } else {
      auto mode = static_cast<unsigned>(st.permissions()) & 0777u;
      std::ostringstream m;
      m << std::oct << mode;
      out[rel] = "file " + prefixpm::sha256_file(it->path()) + " " + m.str();
    }
  }
  return out;
}

std::string describe_difference(const Snapshot& before, const Snapshot& after) {
  std::string out;
  for (const auto& [path, what] : before) {
    auto it = after.find(path);
    if (it == after.end()) out += "- " + path + "\n";
    else if (it->second != what) out += "~ " + path + "\n";
  }
  for (const auto& [path, what] : after) {
    if (!before.contains(path)) out += "+ " + path + "\n";
  }
  return out;
}

ProcessResult run_process(const std::vector<std::string>& argv,
                          std::map<std::string, std::optional<std::string>> env) {
  if (!env.contains("EPREFIX")) env["EPREFIX"] = std::nullopt;
  std::map<std::string, std::string> merged;
  for (char** e = environ; *e; ++e) {
    std::string kv = *e;
    auto eq = kv.find('=');
    if (eq != std::string::npos) merged[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  for (const auto& [k, v] : env) {
    if (v) merged[k] = *v;
    else merged.erase(k);
  }
  std::vector<std::string> env_strings;
  for (const auto& [k, v] : merged) env_strings.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  int out_pipe[2];
  int err_pipe[2];
  if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0) throw std::runtime_error("pipe failed");
  const pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    ::dup2(out_pipe[1], 1);
    ::dup2(err_pipe[1], 2);
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    int devnull = ::open("/dev/null", 0);
    if (devnull >= 0) ::dup2(devnull, 0);
    ::execve(args[0], args.data(), envp.data());
    ::_exit(127);
  }
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  ProcessResult result;
  pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  std::string* sinks[2] = {&result.out, &result.err};
  int open_count = 2;
  char buf[8192];
  while (open_count > 0) {
    if (::poll(fds, 2, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      auto n = ::read(fds[i].fd, buf, sizeof buf);
      if (n > 0) {
        sinks[i]->append(buf, static_cast<std::size_t>(n));
      } else {
        ::close(fds[i].fd);
        fds[i].fd = -1;
        --open_count;
      }
    }
  }
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  result.status = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return result;
}

ProcessResult run_pm(const std::vector<std::string>& args,
                     std::map<std::string, std::optional<std::string>> env) {
  std::vector<std::string> argv{pm_binary().string()};
  argv.insert(argv.end(), args.begin(), args.end());
  return run_process(argv, std::move(env));
}

prefixpm::Recipe recipe(const std::string& cpv, const std::string& header) {
  auto slash = cpv.find('/');
  std::string category = cpv.substr(0, slash);
  std::string rest = cpv.substr(slash + 1);
  for (std::size_t i = 1; i < rest.size(); ++i) {
    if (rest[i] != '-') continue;
    if (auto v = prefixpm::try_parse_version(std::string_view(rest).substr(i + 1))) {
      prefixpm::PackageId id{category, rest.substr(0, i), *v, "0", ""};
      std::string text = header;
      if (text.find("KEYWORDS") == std::string::npos) text = "KEYWORDS=\"amd64-linux\"\n" + text;
      return prefixpm::parse_recipe_text(text, id, cpv);
    }
  }
  throw std::invalid_argument("not a category/name-version: " + cpv);
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::string slurp(const fs::path& path) { return prefixpm::read_file(path); }

}  // namespace testsupport
