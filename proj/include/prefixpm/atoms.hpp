#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace prefixpm {

// Simplified PMS version: N(.N)*[letter][_suffixN][-rN].
//
// Ordering: numeric components compared as integers, a strict prefix sorts
// first ("2.7" < "2.7.0"); then letter (absent first); then suffix with
// alpha < beta < pre < rc < (none) < p; then suffix number; then revision.
enum class SuffixKind { alpha, beta, pre, rc, p };

struct VersionSuffix {
  SuffixKind kind = SuffixKind::alpha;
  std::uint64_t number = 0;

  friend bool operator==(const VersionSuffix&, const VersionSuffix&) = default;
};

struct Version {
  std::vector<std::uint64_t> components;
  std::optional<char> letter;
  std::optional<VersionSuffix> suffix;
  std::uint64_t revision = 0;

  std::string str() const;
  Version without_revision() const;

  friend bool operator==(const Version&, const Version&) = default;
  friend std::strong_ordering operator<=>(const Version& a, const Version& b);
};

Version parse_version(std::string_view text);
std::optional<Version> try_parse_version(std::string_view text);
std::strong_ordering compare_versions(const Version& a, const Version& b);

enum class AtomOp { none, eq, ge, le, gt, lt, tilde };

struct UseDep {
  std::string flag;
  bool enabled = true;

  friend bool operator==(const UseDep&, const UseDep&) = default;
};

struct Atom {
  AtomOp op = AtomOp::none;
  std::optional<std::string> category;
  std::string name;
  std::optional<Version> version;
  std::optional<std::string> slot;
  std::vector<UseDep> use_deps;

  // [op]category/name[-version][:slot][[flag,-flag]]
  std::string str() const;
  // "category/name" or just "name" for shorthand atoms.
  std::string package() const;

  friend bool operator==(const Atom&, const Atom&) = default;
};

Atom parse_atom(std::string_view text);

struct PackageId {
  std::string category;
  std::string name;
  Version version;
  std::string slot = "0";
  std::string repository;

  // category/name-version
  std::string str() const;
  // category/name
  std::string package() const;
  // category/name-version:slot
  std::string slotted() const;

  friend bool operator==(const PackageId&, const PackageId&) = default;
};

// Lexicographic on (category, name, version).
bool id_less(const PackageId& a, const PackageId& b);

using FlagSet = std::set<std::string>;

// Category/name equality, operator constraint, slot and USE requirements.
// An atom without a category compares names only.
bool atom_matches(const Atom& atom, const PackageId& candidate, const FlagSet& candidate_use);

bool valid_category(std::string_view s);
bool valid_package_name(std::string_view s);
bool valid_flag(std::string_view s);

}  // namespace prefixpm
