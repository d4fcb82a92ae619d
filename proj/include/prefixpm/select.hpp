#pragma once

#include <prefixpm/atoms.hpp>
#include <prefixpm/vdb.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace prefixpm {

// Provider selection among slotted installs.
//
//   <root><eprefix>/etc/pm/select-modules.conf   "module category/name pattern"
//   <root><eprefix>/etc/pm/select/<module>       "category/name-version:slot"
//   <root><eprefix>/usr/bin/<module>             alias symlink
//
// A module without a line in select-modules.conf maps to installed packages
// named like the module, with binary pattern "<module>{slot}".
struct SelectMapping {
  std::string module;
  std::string package;  // category/name, empty: match by name
  std::string pattern;  // "{slot}" is replaced by the provider's slot
};

struct SelectModule {
  std::string module;
  std::vector<PackageId> providers;  // ascending version
  std::optional<PackageId> active;
};

SelectMapping select_mapping(const Vdb& vdb, const std::string& module);

SelectModule select_list(const Vdb& vdb, const std::string& module);

// Provider of the module matching `atom`; the atom may omit category.
std::optional<PackageId> find_provider(const SelectModule& listing, const Atom& atom);

// Writes the selection record and repoints the alias. Takes the root lock.
void select_set(const Vdb& vdb, const std::string& module, const PackageId& provider);

// Drops selection records (and their aliases) that point at `id`. Callers
// already hold the root lock.
void clear_if_active(const Vdb& vdb, const PackageId& id);

}  // namespace prefixpm
