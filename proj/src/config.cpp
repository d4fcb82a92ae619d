#include <prefixpm/config.hpp>

#include <prefixpm/errors.hpp>
#include <prefixpm/fsutil.hpp>

#include <sstream>

namespace prefixpm {

namespace {

std::optional<std::string> read_optional(const fs::path& path) {
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  try {
    return read_file(path);
  } catch (const Error&) {
    throw ConfigError("cannot read " + path.string());
  }
}

std::vector<Assignment> parse_config_assignments(std::string_view text, const fs::path& origin) {
  try {
    return parse_assignments(text, origin.string());
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

// Lines of "atom word word..." with '#' comments.
template <typename Fn>
void for_each_rule_line(const fs::path& file, Fn&& fn) {
  auto text = read_optional(file);
  if (!text) return;
  std::istringstream in(*text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto words = split_words(raw.substr(0, raw.find('#')));
    if (words.empty()) continue;
    const auto where = file.string() + ":" + std::to_string(lineno);
    Atom atom;
    try {
      atom = parse_atom(words.front());
    } catch (const ParseError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    words.erase(words.begin());
    fn(std::move(atom), std::move(words), where);
  }
}

void set_layered(std::map<std::string, std::string>& env, const std::string& key,
                 std::string value) {
  if (key == "FEATURES") {
    auto it = env.find(key);
    value = merge_tokens(it == env.end() ? "" : it->second, value);
  }
  env[key] = std::move(value);
}

void apply_layer(std::map<std::string, std::string>& env, const std::vector<Assignment>& layer) {
  for (const auto& a : layer) {
    auto value = expand(a.value, [&env](std::string_view name) -> std::optional<std::string> {
      auto it = env.find(std::string(name));
      if (it == env.end()) return std::nullopt;
      return it->second;
    });
    set_layered(env, a.key, std::move(value));
  }
}

void apply_use_tokens(const std::vector<std::string>& tokens, FlagOrigin origin,
                      FlagSet& enabled, std::map<std::string, FlagOrigin>& origins) {
  for (const auto& tok : tokens) {
    if (tok == "-*") {
      enabled.clear();
      origins.clear();
    } else if (tok.starts_with('-')) {
      auto flag = tok.substr(1);
      enabled.erase(flag);
      origins.erase(flag);
    } else {
      auto flag = tok.starts_with('+') ? tok.substr(1) : tok;
      enabled.insert(flag);
      origins[flag] = origin;
    }
  }
}

}  // namespace

std::optional<std::string> Config::var(std::string_view key) const {
  for (const auto& [k, v] : vars)
    if (k == key) return v;
  return std::nullopt;
}

std::string Config::var_or(std::string_view key, std::string fallback) const {
  auto v = var(key);
  return v ? *v : fallback;
}

void Config::set_var(const std::string& key, std::string value) {
  for (auto& [k, v] : vars) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  vars.emplace_back(key, std::move(value));
}

std::set<std::string> Config::accept_keywords() const {
  auto words = split_words(var_or("ACCEPT_KEYWORDS", default_accept_keywords));
  return {words.begin(), words.end()};
}

std::string Config::cbuild() const {
  auto v = var("CBUILD");
  if (v && !v->empty()) return *v;
  auto host = var("CHOST");
  if (host && !host->empty()) return *host;
  return default_cbuild;
}

std::string Config::chost() const {
  auto v = var("CHOST");
  if (v && !v->empty()) return *v;
  return cbuild();
}

Config empty_config(const fs::path& root, std::string_view eprefix) {
  Config c;
  c.root = root;
  c.eprefix = normalize_eprefix(eprefix);
  return c;
}

Config load_config(const fs::path& config_root, const fs::path& root, std::string_view eprefix) {
  Config c = empty_config(root, eprefix);
  c.config_root = config_root;
  const auto dir = c.pm_dir();

  const auto make_conf = dir / "make.conf";
  std::string text;
  try {
    text = read_file(make_conf);
  } catch (const Error&) {
    throw ConfigError("cannot read " + make_conf.string());
  }
  for (const auto& a : parse_config_assignments(text, make_conf)) {
    auto value = expand(a.value, [&c](std::string_view name) { return c.var(name); });
    c.set_var(a.key, std::move(value));
  }

  if (auto g = read_optional(dir / "global-env.conf"))
    c.global_env = parse_config_assignments(*g, dir / "global-env.conf");

  for_each_rule_line(dir / "package.env", [&](Atom atom, std::vector<std::string> files,
                                             const std::string& where) {
    if (files.empty()) throw ConfigError(where + ": expected 'atom env-file'");
    PackageEnvRule rule{std::move(atom), {}};
    for (const auto& name : files) {
      if (!c.env_files.contains(name)) {
        fs::path file = dir / "env" / name;
        std::error_code ec;
        if (!fs::is_regular_file(file, ec) && !name.ends_with(".conf"))
          file = dir / "env" / (name + ".conf");
        if (!fs::is_regular_file(file, ec))
          throw ConfigError(where + ": env file '" + name + "' not found in " +
                            (dir / "env").string());
        c.env_files[name] = parse_config_assignments(read_file(file), file);
      }
      rule.env_files.push_back(name);
    }
    c.package_env_rules.push_back(std::move(rule));
  });

  for_each_rule_line(dir / "package.use", [&](Atom atom, std::vector<std::string> tokens,
                                             const std::string& where) {
    for (const auto& t : tokens) {
      std::string_view flag = t;
      if (flag == "-*") continue;
      if (flag.starts_with('-') || flag.starts_with('+')) flag.remove_prefix(1);
      if (!valid_flag(flag)) throw ConfigError(where + ": invalid flag '" + t + "'");
    }
    c.package_use_rules.push_back({std::move(atom), std::move(tokens)});
  });
  return c;
}

EffectiveUse compute_use(const Config& config, const Recipe& recipe) {
  EffectiveUse use;
  FlagSet enabled;
  std::map<std::string, FlagOrigin> origins;
  apply_use_tokens(split_words(config.var_or("USE", "")), FlagOrigin::global, enabled, origins);
  for (const auto& rule : config.package_use_rules) {
    if (!atom_matches(rule.atom, recipe.id, {})) continue;
    for (const auto& tok : rule.tokens) {
      std::string_view flag = tok;
      if (flag.starts_with('-') || flag.starts_with('+')) flag.remove_prefix(1);
      if (flag != "*" && !recipe.iuse.contains(std::string(flag)))
        warn("package.use flag '" + std::string(flag) + "' is not in IUSE of " + recipe.id.str());
    }
    apply_use_tokens(rule.tokens, FlagOrigin::package, enabled, origins);
  }
  for (const auto& flag : enabled) {
    if (!recipe.iuse.contains(flag)) continue;
    use.enabled.insert(flag);
    use.origin[flag] = origins[flag];
  }
  return use;
}

std::map<std::string, std::string> build_environment(const Config& config, const Recipe& recipe) {
  std::map<std::string, std::string> env;
  for (const auto& [k, v] : config.vars) env[k] = v;
  apply_layer(env, config.global_env);
  for (const auto& rule : config.package_env_rules) {
    if (!atom_matches(rule.atom, recipe.id, {})) continue;
    for (const auto& name : rule.env_files) apply_layer(env, config.env_files.at(name));
  }
  env["EPREFIX"] = config.eprefix;
  env["ROOT"] = config.root.string();
  return env;
}

std::vector<fs::path> find_user_patches(const Config& config, const PackageId& id) {
  std::vector<fs::path> out;
  const auto base = config.pm_dir() / "patches" / id.category;
  for (const auto& dir : {base / id.name, base / (id.name + "-" + id.version.str())}) {
    for (const auto& entry : sorted_entries(dir)) {
      std::error_code ec;
      if (fs::is_regular_file(entry, ec) && entry.extension() == ".patch") out.push_back(entry);
    }
  }
  return out;
}

std::string merge_tokens(std::string_view base, std::string_view extra) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto src : {base, extra}) {
    for (auto& tok : split_words(src)) {
      if (seen.insert(tok).second) out.push_back(std::move(tok));
    }
  }
  return join(out, " ");
}

}  // namespace prefixpm
