#include <prefixpm/fsutil.hpp>

#include <prefixpm/errors.hpp>

#include <fcntl.h>
#include <stdlib.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

namespace prefixpm {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::config, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::config, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::config, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string normalize_eprefix(std::string_view eprefix) {
  if (eprefix.empty()) return {};
  if (eprefix.front() != '/')
    throw ConfigError("prefix must begin with '/': " + std::string(eprefix));
  std::string out = fs::path(eprefix).lexically_normal().generic_string();
  while (out.size() > 1 && out.back() == '/') out.pop_back();
  if (out == "/") return {};
  return out;
}

fs::path install_base(const fs::path& root, std::string_view eprefix) {
  std::string offset = normalize_eprefix(eprefix);
  if (offset.empty()) return root;
  return root / fs::path(offset).relative_path();
}

bool is_within(const fs::path& path, const fs::path& base) {
  auto p = path.lexically_normal();
  auto b = base.lexically_normal();
  auto rel = p.lexically_relative(b);
  if (rel.empty()) return false;
  auto first = *rel.begin();
  return first != "..";
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) out.push_back(entry.path());
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  return out;
}

bool is_empty_or_absent(const fs::path& dir) {
  std::error_code ec;
  if (!fs::exists(dir, ec)) return true;
  return fs::is_directory(dir, ec) && fs::is_empty(dir, ec);
}

void prune_empty_dirs(fs::path dir, const fs::path& stop) {
  std::error_code ec;
  const auto limit = stop.lexically_normal();
  dir = dir.lexically_normal();
  while (is_within(dir, limit) && dir != limit) {
    if (!fs::is_directory(dir, ec) || fs::is_symlink(dir, ec) || !fs::is_empty(dir, ec)) break;
    fs::remove(dir, ec);
    if (ec) break;
    dir = dir.parent_path();
  }
}

FileLock::FileLock(const fs::path& path) {
  fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd_ < 0) throw Error(ErrorKind::config, "cannot open lock target " + path.string());
  if (::flock(fd_, LOCK_EX) != 0) {
    ::close(fd_);
    throw Error(ErrorKind::config, "cannot lock " + path.string());
  }
}

FileLock::~FileLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

TempDir::TempDir(std::string_view stem) {
  std::string tmpl = (fs::temp_directory_path() / (std::string(stem) + "-XXXXXX")).string();
  if (::mkdtemp(tmpl.data()) == nullptr)
    throw Error(ErrorKind::build, "cannot create temporary directory " + tmpl);
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace {

std::mutex sink_mutex;
WarningSink& sink() {
  static WarningSink s = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
  return s;
}

}  // namespace

void set_warning_sink(WarningSink s) {
  std::lock_guard lock(sink_mutex);
  sink() = s ? std::move(s) : [](const std::string& m) {
    std::cerr << "warning: " << m << '\n';
  };
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex);
  sink()(message);
}

}  // namespace prefixpm
