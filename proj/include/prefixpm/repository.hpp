#pragma once

#include <prefixpm/atoms.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace prefixpm {

struct Repository {
  std::string name;
  std::filesystem::path path;
  int priority = 0;

  friend bool operator==(const Repository&, const Repository&) = default;
};

inline constexpr int default_overlay_priority = 10;

// Phase names in execution order.
inline constexpr const char* phase_names[] = {"fetch",     "unpack",  "prepare",
                                              "configure", "compile", "install"};
bool is_phase_name(std::string_view name);

struct PhaseLine {
  std::string text;
  std::size_t line = 0;  // 1-based line in the recipe file, 0 if synthetic

  friend bool operator==(const PhaseLine& a, const PhaseLine& b) { return a.text == b.text; }
};

struct Recipe {
  PackageId id;
  std::string description;
  FlagSet iuse;
  std::string depend;
  std::string rdepend;
  std::string pdepend;
  std::set<std::string> keywords;
  std::vector<std::string> src;
  std::map<std::string, std::vector<PhaseLine>> phases;
  std::vector<std::string> bundled_patches;
  // Recipe directory <repo>/<category>/<name>; empty for in-memory recipes.
  std::filesystem::path dir;

  const std::string& slot() const { return id.slot; }

  friend bool operator==(const Recipe& a, const Recipe& b) {
    return a.id == b.id && a.description == b.description && a.iuse == b.iuse &&
           a.depend == b.depend && a.rdepend == b.rdepend && a.pdepend == b.pdepend &&
           a.keywords == b.keywords && a.src == b.src && a.phases == b.phases &&
           a.bundled_patches == b.bundled_patches;
  }
};

// Reads <config_root>/etc/pm/repos.conf: one "name = path priority" per line.
// Relative paths are taken relative to the etc/pm directory. Result is sorted
// by descending priority, ties by name.
std::vector<Repository> load_repositories(const std::filesystem::path& config_root);

// Registers an overlay in repos.conf under the etc/pm/.lock advisory lock.
void add_overlay(const std::filesystem::path& config_root, const std::string& name,
                 const std::filesystem::path& path, int priority = default_overlay_priority);

std::filesystem::path repos_conf_path(const std::filesystem::path& config_root);

// Parses <repo>/<category>/<name>/<name>-<version>.recipe.
Recipe parse_recipe(const std::filesystem::path& file, const Repository& repository);

// Parses recipe text for an already-known identity (used for in-memory trees).
Recipe parse_recipe_text(std::string_view text, PackageId id, std::string_view origin);

// Canonical text in the recipe format; parse_recipe_text re-reads it.
std::string render_recipe(const Recipe& recipe);

// Keyword acceptance: stable "k" is accepted by "k" or "~k"; testing "~k"
// only by "~k".
bool keywords_accepted(const std::set<std::string>& keywords,
                       const std::set<std::string>& accept);

// All loaded repositories and their recipes.
class PackageTree {
 public:
  PackageTree() = default;

  static PackageTree load(const std::vector<Repository>& repos);

  // In-memory repositories are used by tests and the resolver oracle.
  void add_repository(Repository repo, std::vector<Recipe> recipes);

  const std::vector<Repository>& repositories() const { return repos_; }

  // Matching recipes ordered by (repository priority desc, version desc).
  // Shorthand atoms are resolved by unique name or raise AmbiguityError.
  std::vector<const Recipe*> find_recipes(const Atom& atom) const;

  // Highest accepted version from the highest-priority repository that
  // carries category/name at all (whole-package shadowing).
  const Recipe& best_match(const Atom& atom, const std::set<std::string>& accept_keywords) const;

  const Recipe* find_exact(const std::string& category, const std::string& name,
                           const Version& version) const;

  // Fills in the category of a shorthand atom, or throws AmbiguityError.
  // Unknown names are returned unchanged.
  Atom qualify(const Atom& atom) const;

  std::vector<const Recipe*> all_recipes() const;

 private:
  struct Entry {
    int priority;
    std::string repo;
    std::shared_ptr<const Recipe> recipe;
  };

  std::vector<Repository> repos_;
  // category/name -> recipes from every repository
  std::map<std::string, std::vector<Entry>> packages_;
  // name -> categories
  std::map<std::string, std::set<std::string>> by_name_;
};

}  // namespace prefixpm
