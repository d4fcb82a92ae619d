#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace prefixpm {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path);

// Writes via a sibling temporary and rename(2).
void write_file_atomic(const fs::path& path, std::string_view content);

// "/" and "" both mean no offset; anything else is returned as "/a/b"
// without a trailing slash. Throws ConfigError if not absolute-style.
std::string normalize_eprefix(std::string_view eprefix);

// <root><eprefix> as a filesystem path.
fs::path install_base(const fs::path& root, std::string_view eprefix);

// Lexical containment after normalization; does not touch the filesystem.
bool is_within(const fs::path& path, const fs::path& base);

// Directory entries sorted bytewise by filename.
std::vector<fs::path> sorted_entries(const fs::path& dir);

bool is_empty_or_absent(const fs::path& dir);

// Removes `dir` and then each parent up to (not including) `stop` while empty.
void prune_empty_dirs(fs::path dir, const fs::path& stop);

// Exclusive flock(2) held for the lifetime of the object. Works on
// directories, so no lock file needs to be created.
class FileLock {
 public:
  explicit FileLock(const fs::path& path);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

// mkdtemp-backed directory removed recursively on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view stem = "prefix-pm");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
};

// Diagnostics go through this sink (stderr by default).
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace prefixpm
