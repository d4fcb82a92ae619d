#include <prefixpm/select.hpp>

#include <prefixpm/errors.hpp>
#include <prefixpm/fsutil.hpp>
#include <prefixpm/textfile.hpp>

#include <algorithm>
#include <sstream>

namespace prefixpm {

namespace {

fs::path pm_etc(const Vdb& vdb) { return vdb.base() / "etc" / "pm"; }
fs::path record_path(const Vdb& vdb, const std::string& module) {
  return pm_etc(vdb) / "select" / module;
}
fs::path alias_path(const Vdb& vdb, const std::string& module) {
  return vdb.base() / "usr" / "bin" / module;
}

std::string binary_name(const SelectMapping& m, const std::string& slot) {
  std::string out = m.pattern;
  for (auto pos = out.find("{slot}"); pos != std::string::npos; pos = out.find("{slot}"))
    out.replace(pos, 6, slot);
  return out;
}

std::string read_record(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) return {};
  return std::string(trim(read_file(path)));
}

void check_module_name(const std::string& module) {
  if (module.empty() || module.find('/') != std::string::npos || module.starts_with('.'))
    throw ParseError("invalid select module name '" + module + "'");
}

}  // namespace

SelectMapping select_mapping(const Vdb& vdb, const std::string& module) {
  check_module_name(module);
  const auto conf = pm_etc(vdb) / "select-modules.conf";
  std::error_code ec;
  if (fs::is_regular_file(conf, ec)) {
    std::istringstream in(read_file(conf));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto words = split_words(strip_comment(line));
      if (words.empty()) continue;
      if (words.size() != 3)
        throw ConfigError(conf.string() + ":" + std::to_string(lineno) +
                          ": expected 'module category/name pattern'");
      if (words[0] == module) return {words[0], words[1], words[2]};
    }
  }
  return {module, "", module + "{slot}"};
}

SelectModule select_list(const Vdb& vdb, const std::string& module) {
  const auto mapping = select_mapping(vdb, module);
  SelectModule out;
  out.module = module;
  for (const auto& e : vdb.entries()) {
    bool ours = mapping.package.empty() ? e.id.name == module : e.id.package() == mapping.package;
    if (ours) out.providers.push_back(e.id);
  }
  std::stable_sort(out.providers.begin(), out.providers.end(),
                   [](const PackageId& a, const PackageId& b) { return a.version < b.version; });
  const auto record = read_record(record_path(vdb, module));
  if (!record.empty()) {
    for (const auto& p : out.providers) {
      if (p.slotted() == record) out.active = p;
    }
    if (!out.active) warn("selection for " + module + " points at " + record + ", which is not installed");
  }
  return out;
}

std::optional<PackageId> find_provider(const SelectModule& listing, const Atom& atom) {
  std::optional<PackageId> found;
  for (const auto& p : listing.providers) {
    if (!atom_matches(atom, p, {})) continue;
    if (found && found->slot == p.slot) found = p;
    else if (found) throw AmbiguityError(atom.str(), {found->slotted(), p.slotted()});
    else found = p;
  }
  return found;
}

void select_set(const Vdb& vdb, const std::string& module, const PackageId& provider) {
  const auto mapping = select_mapping(vdb, module);
  const auto listing = select_list(vdb, module);
  const auto it = std::find_if(listing.providers.begin(), listing.providers.end(),
                               [&](const PackageId& p) { return p.str() == provider.str(); });
  if (it == listing.providers.end())
    throw ResolutionError(provider.str() + " is not an installed provider of " + module);

  const auto binary = binary_name(mapping, it->slot);
  const auto* entry = vdb.find(it->category, it->name, it->version);
  const std::string wanted = vdb.eprefix() + "/usr/bin/" + binary;
  const bool ships = std::any_of(entry->contents.begin(), entry->contents.end(),
                                 [&](const ContentEntry& c) { return c.path == wanted; });
  if (!ships) throw ResolutionError(it->str() + " does not install " + wanted);

  fs::create_directories(vdb.base());
  FileLock lock(vdb.base());
  const auto alias = alias_path(vdb, module);
  std::error_code ec;
  if (fs::exists(fs::symlink_status(alias, ec)) && !fs::is_symlink(fs::symlink_status(alias, ec)))
    throw ConfigError(alias.string() + " exists and is not a symlink");
  const auto tmp = alias.parent_path() / ("." + module + ".select-tmp");
  fs::remove(tmp, ec);
  fs::create_symlink(binary, tmp);
  fs::rename(tmp, alias);
  write_file_atomic(record_path(vdb, module), it->slotted() + "\n");
}

void clear_if_active(const Vdb& vdb, const PackageId& id) {
  const auto dir = pm_etc(vdb) / "select";
  for (const auto& record : sorted_entries(dir)) {
    if (read_record(record) != id.slotted()) continue;
    const auto alias = alias_path(vdb, record.filename().string());
    std::error_code ec;
    if (fs::is_symlink(fs::symlink_status(alias, ec))) {
      fs::remove(alias, ec);
      prune_empty_dirs(alias.parent_path(), vdb.base());
    }
    fs::remove(record, ec);
  }
  prune_empty_dirs(dir, vdb.base());
}

}  // namespace prefixpm
