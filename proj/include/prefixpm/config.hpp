#pragma once

#include <prefixpm/atoms.hpp>
#include <prefixpm/repository.hpp>
#include <prefixpm/textfile.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace prefixpm {

inline constexpr const char* default_cbuild = "x86_64-pc-linux-gnu";
inline constexpr const char* default_accept_keywords = "amd64-linux";

struct PackageEnvRule {
  Atom atom;
  std::vector<std::string> env_files;  // keys into Config::env_files
};

struct PackageUseRule {
  Atom atom;
  std::vector<std::string> tokens;  // "flag", "-flag" or "-*"
};

// Layered configuration for one (config-root, root, prefix) triple.
// Immutable once loaded.
struct Config {
  std::filesystem::path config_root;
  std::filesystem::path root = "/";
  std::string eprefix;  // normalized: "" or "/a/b"

  // make.conf, expanded in file order
  std::vector<std::pair<std::string, std::string>> vars;
  std::vector<PackageEnvRule> package_env_rules;
  std::vector<PackageUseRule> package_use_rules;
  // global-env.conf and env/*.conf keep their raw assignments so that
  // ${VAR} resolves against the layer beneath them at build time.
  std::vector<Assignment> global_env;
  std::map<std::string, std::vector<Assignment>> env_files;

  std::optional<std::string> var(std::string_view key) const;
  std::string var_or(std::string_view key, std::string fallback) const;
  void set_var(const std::string& key, std::string value);

  std::set<std::string> accept_keywords() const;
  std::string cbuild() const;
  std::string chost() const;
  bool is_cross() const { return chost() != cbuild(); }

  std::filesystem::path pm_dir() const { return config_root / "etc" / "pm"; }
};

// Reads <config_root>/etc/pm/{make.conf,package.env,package.use,
// global-env.conf,env/*.conf}. make.conf is required.
Config load_config(const std::filesystem::path& config_root, const std::filesystem::path& root,
                   std::string_view eprefix);

// Configuration with no files behind it; used for in-memory trees.
Config empty_config(const std::filesystem::path& root = "/", std::string_view eprefix = "");

enum class FlagOrigin { global, package, default_value };

struct EffectiveUse {
  FlagSet enabled;
  std::map<std::string, FlagOrigin> origin;

  friend bool operator==(const EffectiveUse& a, const EffectiveUse& b) {
    return a.enabled == b.enabled;
  }
};

EffectiveUse compute_use(const Config& config, const Recipe& recipe);

// make.conf -> global-env.conf -> matching package.env files, later layers
// winning except FEATURES, which accumulates as a token union. EPREFIX and
// ROOT are included; S, D and USE are added by the build engine.
std::map<std::string, std::string> build_environment(const Config& config, const Recipe& recipe);

// patches/<cat>/<name>/ then patches/<cat>/<name>-<version>/, each sorted
// bytewise.
std::vector<std::filesystem::path> find_user_patches(const Config& config, const PackageId& id);

// Space-separated token union preserving first occurrence order.
std::string merge_tokens(std::string_view base, std::string_view extra);

}  // namespace prefixpm
