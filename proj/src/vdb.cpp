#include <prefixpm/vdb.hpp>

#include <prefixpm/errors.hpp>
#include <prefixpm/fsutil.hpp>
#include <prefixpm/textfile.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace prefixpm {

namespace {

constexpr std::string_view digest_prefix = "sha256:";

std::string read_value(const fs::path& dir, const char* name) {
  std::error_code ec;
  if (!fs::exists(dir / name, ec)) return {};
  auto text = read_file(dir / name);
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return text;
}

fs::path db_root(const fs::path& base) { return base / "var" / "db" / "pm"; }
fs::path world_path(const fs::path& base) { return base / "var" / "lib" / "pm" / "world"; }

}  // namespace

std::string render_contents(const std::vector<ContentEntry>& contents) {
  std::string out;
  for (const auto& c : contents) {
    switch (c.kind) {
      case ContentKind::obj:
        out += "obj " + c.path + " " + std::string(digest_prefix) + c.digest + "\n";
        break;
      case ContentKind::dir:
        out += "dir " + c.path + "\n";
        break;
      case ContentKind::sym:
        out += "sym " + c.path + " -> " + c.target + "\n";
        break;
    }
  }
  return out;
}

std::vector<ContentEntry> parse_contents(std::string_view text, std::string_view origin) {
  std::vector<ContentEntry> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fail = [&] {
      throw FormatError(std::string(origin) + ":" + std::to_string(lineno) +
                        ": malformed CONTENTS line");
    };
    ContentEntry c;
    if (line.starts_with("obj ")) {
      auto sp = line.rfind(' ');
      if (sp <= 4) fail();
      auto digest = std::string_view(line).substr(sp + 1);
      if (!digest.starts_with(digest_prefix)) fail();
      c.kind = ContentKind::obj;
      c.path = line.substr(4, sp - 4);
      c.digest = std::string(digest.substr(digest_prefix.size()));
    } else if (line.starts_with("dir ")) {
      c.kind = ContentKind::dir;
      c.path = line.substr(4);
    } else if (line.starts_with("sym ")) {
      auto arrow = line.find(" -> ");
      if (arrow == std::string::npos) fail();
      c.kind = ContentKind::sym;
      c.path = line.substr(4, arrow - 4);
      c.target = line.substr(arrow + 4);
    } else {
      fail();
    }
    out.push_back(std::move(c));
  }
  return out;
}

Vdb Vdb::open(const fs::path& root, std::string_view eprefix) {
  Vdb v;
  v.root_ = root;
  v.eprefix_ = normalize_eprefix(eprefix);
  v.load();
  return v;
}

Vdb Vdb::in_memory() { return Vdb{}; }

fs::path Vdb::base() const { return install_base(root_, eprefix_); }

fs::path Vdb::entry_dir(const PackageId& id) const {
  return db_root(base()) / id.category / (id.name + "-" + id.version.str());
}

void Vdb::load() {
  const auto db = db_root(base());
  for (const auto& cat : sorted_entries(db)) {
    if (!fs::is_directory(cat)) continue;
    const auto category = cat.filename().string();
    for (const auto& dir : sorted_entries(cat)) {
      if (!fs::is_directory(dir)) continue;
      const auto leaf = dir.filename().string();
      // name-version, split at the first hyphen followed by a valid version
      std::optional<PackageId> id;
      for (std::size_t i = 1; i < leaf.size(); ++i) {
        if (leaf[i] != '-') continue;
        if (auto v = try_parse_version(std::string_view(leaf).substr(i + 1))) {
          id = PackageId{category, leaf.substr(0, i), *v, "0", ""};
          break;
        }
      }
      if (!id) {
        warn("ignoring malformed database entry " + dir.string());
        continue;
      }
      VdbEntry e;
      e.id = *id;
      e.id.slot = read_value(dir, "SLOT");
      if (e.id.slot.empty()) e.id.slot = "0";
      for (auto& f : split_words(read_value(dir, "USE"))) e.use.insert(std::move(f));
      e.chost = read_value(dir, "CHOST");
      const auto env_text = read_value(dir, "BUILD_ENV");
      for (const auto& a : parse_assignments(env_text, (dir / "BUILD_ENV").string()))
        e.build_env[a.key] = literal_value(a.value);
      e.contents = parse_contents(read_value(dir, "CONTENTS"), (dir / "CONTENTS").string());
      e.depend = read_value(dir, "DEPEND");
      e.rdepend = read_value(dir, "RDEPEND");
      e.pdepend = read_value(dir, "PDEPEND");
      e.reason = read_value(dir, "REASON");
      entries_.push_back(std::move(e));
    }
  }
  sort_entries();
}

void Vdb::sort_entries() {
  std::sort(entries_.begin(), entries_.end(),
            [](const VdbEntry& a, const VdbEntry& b) { return id_less(a.id, b.id); });
}

const VdbEntry* Vdb::find(const std::string& category, const std::string& name,
                          const Version& version) const {
  for (const auto& e : entries_) {
    if (e.id.category == category && e.id.name == name && e.id.version == version) return &e;
  }
  return nullptr;
}

std::vector<const VdbEntry*> Vdb::find_package(const std::string& category,
                                               const std::string& name) const {
  std::vector<const VdbEntry*> out;
  for (const auto& e : entries_) {
    if (e.id.category == category && e.id.name == name) out.push_back(&e);
  }
  return out;
}

const VdbEntry* Vdb::find_slot(const std::string& category, const std::string& name,
                               const std::string& slot) const {
  for (const auto& e : entries_) {
    if (e.id.category == category && e.id.name == name && e.id.slot == slot) return &e;
  }
  return nullptr;
}

std::vector<const VdbEntry*> Vdb::match(const Atom& atom) const {
  std::vector<const VdbEntry*> out;
  for (const auto& e : entries_) {
    if (atom_matches(atom, e.id, e.use)) out.push_back(&e);
  }
  return out;
}

std::vector<const VdbEntry*> Vdb::owners(const std::string& path) const {
  std::vector<const VdbEntry*> out;
  for (const auto& e : entries_) {
    for (const auto& c : e.contents) {
      if (c.path == path) {
        out.push_back(&e);
        break;
      }
    }
  }
  return out;
}

void Vdb::write(const VdbEntry& entry) {
  if (on_disk()) {
    const auto dir = entry_dir(entry.id);
    fs::create_directories(dir);
    auto put = [&dir](const char* name, const std::string& value) {
      write_file_atomic(dir / name, value.empty() ? std::string{} : value + "\n");
    };
    put("SLOT", entry.id.slot);
    put("USE", join(std::vector<std::string>(entry.use.begin(), entry.use.end()), " "));
    put("CHOST", entry.chost);
    std::string env;
    for (const auto& [k, v] : entry.build_env) env += k + "=" + quote_value(v) + "\n";
    write_file_atomic(dir / "BUILD_ENV", env);
    write_file_atomic(dir / "CONTENTS", render_contents(entry.contents));
    put("DEPEND", entry.depend);
    put("RDEPEND", entry.rdepend);
    put("PDEPEND", entry.pdepend);
    put("REASON", entry.reason);
  }
  std::erase_if(entries_, [&](const VdbEntry& e) {
    return e.id.category == entry.id.category && e.id.name == entry.id.name &&
           e.id.version == entry.id.version;
  });
  entries_.push_back(entry);
  sort_entries();
}

void Vdb::remove(const PackageId& id) {
  if (on_disk()) {
    const auto dir = entry_dir(id);
    std::error_code ec;
    fs::remove_all(dir, ec);
    prune_empty_dirs(dir.parent_path(), base());
  }
  std::erase_if(entries_, [&](const VdbEntry& e) {
    return e.id.category == id.category && e.id.name == id.name && e.id.version == id.version;
  });
}

std::vector<std::string> Vdb::world() const {
  if (!on_disk()) return memory_world_;
  std::error_code ec;
  const auto path = world_path(base());
  if (!fs::exists(path, ec)) return {};
  auto atoms = split_words(read_file(path));
  std::sort(atoms.begin(), atoms.end());
  return atoms;
}

void Vdb::write_world(const std::vector<std::string>& atoms) {
  if (!on_disk()) {
    memory_world_ = atoms;
    return;
  }
  const auto path = world_path(base());
  if (atoms.empty()) {
    std::error_code ec;
    fs::remove(path, ec);
    prune_empty_dirs(path.parent_path(), base());
    return;
  }
  std::string text;
  for (const auto& a : atoms) text += a + "\n";
  write_file_atomic(path, text);
}

void Vdb::add_world(const std::string& atom) {
  auto atoms = world();
  if (std::find(atoms.begin(), atoms.end(), atom) != atoms.end()) return;
  atoms.push_back(atom);
  std::sort(atoms.begin(), atoms.end());
  write_world(atoms);
}

void Vdb::remove_world(const std::string& atom) {
  auto atoms = world();
  auto before = atoms.size();
  std::erase(atoms, atom);
  if (atoms.size() != before) write_world(atoms);
}

void Vdb::insert(VdbEntry entry) {
  entries_.push_back(std::move(entry));
  sort_entries();
}

}  // namespace prefixpm
