#pragma once

#include <prefixpm/atoms.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace prefixpm {

enum class ContentKind { obj, dir, sym };

// One CONTENTS line. Paths are absolute with respect to the target root and
// include the prefix offset.
struct ContentEntry {
  ContentKind kind = ContentKind::obj;
  std::string path;
  std::string digest;  // obj: lowercase hex sha256
  std::string target;  // sym: link target

  friend bool operator==(const ContentEntry&, const ContentEntry&) = default;
};

// Keys recorded in BUILD_ENV.
inline constexpr const char* build_env_snapshot_keys[] = {
    "AR", "CC", "CFLAGS", "CXX", "CXXFLAGS", "FEATURES", "FFLAGS", "LD", "LDFLAGS"};

// Keys whose change triggers a rebuild under --changed-use.
inline constexpr const char* rebuild_env_keys[] = {"CFLAGS", "CXXFLAGS", "FEATURES", "FFLAGS",
                                                   "LDFLAGS"};

struct VdbEntry {
  PackageId id;
  FlagSet use;
  std::string chost;
  std::map<std::string, std::string> build_env;
  std::vector<ContentEntry> contents;
  std::string depend;
  std::string rdepend;
  std::string pdepend;
  std::string reason;

  const std::string& slot() const { return id.slot; }
  friend bool operator==(const VdbEntry&, const VdbEntry&) = default;
};

std::string render_contents(const std::vector<ContentEntry>& contents);
std::vector<ContentEntry> parse_contents(std::string_view text, std::string_view origin);

// Installed-package database for one target root:
//   <root><eprefix>/var/db/pm/<cat>/<name>-<ver>/{SLOT,USE,CHOST,BUILD_ENV,
//     CONTENTS,DEPEND,RDEPEND,PDEPEND,REASON}
//   <root><eprefix>/var/lib/pm/world
// An in-memory database has no backing directory; writes only update memory.
class Vdb {
 public:
  static Vdb open(const std::filesystem::path& root, std::string_view eprefix);
  static Vdb in_memory();

  bool on_disk() const { return !root_.empty(); }
  const std::filesystem::path& root() const { return root_; }
  const std::string& eprefix() const { return eprefix_; }
  // <root><eprefix>
  std::filesystem::path base() const;
  std::filesystem::path entry_dir(const PackageId& id) const;

  // Sorted by (category, name, version).
  const std::vector<VdbEntry>& entries() const { return entries_; }
  const VdbEntry* find(const std::string& category, const std::string& name,
                       const Version& version) const;
  std::vector<const VdbEntry*> find_package(const std::string& category,
                                            const std::string& name) const;
  const VdbEntry* find_slot(const std::string& category, const std::string& name,
                            const std::string& slot) const;
  // Entries satisfying the atom, including its USE requirements.
  std::vector<const VdbEntry*> match(const Atom& atom) const;
  // Entries whose CONTENTS list `path` (root-relative absolute form).
  std::vector<const VdbEntry*> owners(const std::string& path) const;

  void write(const VdbEntry& entry);
  void remove(const PackageId& id);

  std::vector<std::string> world() const;
  void add_world(const std::string& atom);
  void remove_world(const std::string& atom);

  // Test helper for in-memory databases.
  void insert(VdbEntry entry);

 private:
  void load();
  void sort_entries();
  void write_world(const std::vector<std::string>& atoms);

  std::filesystem::path root_;
  std::string eprefix_;
  std::vector<VdbEntry> entries_;
  std::vector<std::string> memory_world_;
};

}  // namespace prefixpm
