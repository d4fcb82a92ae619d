#include <prefixpm/repository.hpp>

#include <prefixpm/depexpr.hpp>
#include <prefixpm/errors.hpp>
#include <prefixpm/fsutil.hpp>
#include <prefixpm/textfile.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <sstream>

namespace prefixpm {

namespace {

constexpr std::string_view recipe_suffix = ".recipe";

struct RepoLine {
  std::string name;
  std::string path;
  int priority = 0;
  std::size_t line = 0;
};

std::vector<RepoLine> parse_repos_conf(std::string_view text, const fs::path& origin) {
  std::vector<RepoLine> out;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto hash = raw.find('#');
    auto line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    auto where = origin.string() + ":" + std::to_string(lineno);
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'name = path priority'");
    RepoLine r;
    r.line = lineno;
    r.name = std::string(trim(line.substr(0, eq)));
    auto rest = split_words(line.substr(eq + 1));
    if (r.name.empty() || rest.empty() || rest.size() > 2)
      throw ConfigError(where + ": expected 'name = path priority'");
    r.path = rest[0];
    if (rest.size() == 2) {
      const auto& p = rest[1];
      auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), r.priority);
      if (ec != std::errc{} || ptr != p.data() + p.size())
        throw ConfigError(where + ": invalid priority '" + p + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void check_slot(std::string_view slot, const std::string& origin) {
  if (slot.empty()) throw ParseError(origin + ": empty SLOT");
  for (char c : slot) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ':' || c == '/' || c == '[' ||
        c == ']')
      throw ParseError(origin + ": illegal character in SLOT '" + std::string(slot) + "'");
  }
}

void validate_deps(const Recipe& r, std::string_view key, const std::string& text,
                   const std::string& origin) {
  DepNode tree;
  try {
    tree = parse_dep_expr(text);
  } catch (const ParseError& e) {
    throw ParseError(origin + ": " + std::string(key) + ": " + e.what());
  }
  for (const auto& flag : referenced_flags(tree)) {
    if (!r.iuse.contains(flag))
      throw ParseError(origin + ": " + std::string(key) + " uses flag '" + flag +
                       "' which is not in IUSE");
  }
}

std::string first_phase_split(std::string_view text, std::string_view& phases, std::size_t& first_line) {
  std::size_t pos = 0;
  std::size_t line = 1;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    auto l = trim(text.substr(pos, end == std::string_view::npos ? text.npos : end - pos));
    if (l.starts_with("[phase:")) {
      phases = text.substr(pos);
      first_line = line;
      return std::string(text.substr(0, pos));
    }
    if (end == std::string_view::npos) break;
    pos = end + 1;
    ++line;
  }
  phases = {};
  first_line = line;
  return std::string(text);
}

}  // namespace

bool is_phase_name(std::string_view name) {
  for (const char* p : phase_names)
    if (name == p) return true;
  return false;
}

fs::path repos_conf_path(const fs::path& config_root) {
  return config_root / "etc" / "pm" / "repos.conf";
}

std::vector<Repository> load_repositories(const fs::path& config_root) {
  const auto conf = repos_conf_path(config_root);
  std::string text;
  try {
    text = read_file(conf);
  } catch (const Error&) {
    throw ConfigError("cannot read " + conf.string());
  }
  auto lines = parse_repos_conf(text, conf);
  if (lines.empty()) throw ConfigError(conf.string() + ": no repositories configured");

  std::vector<Repository> repos;
  std::set<std::string> names;
  for (const auto& l : lines) {
    if (!names.insert(l.name).second)
      throw ConfigError(conf.string() + ":" + std::to_string(l.line) +
                        ": duplicate repository name '" + l.name + "'");
    fs::path p = l.path;
    if (p.is_relative()) p = conf.parent_path() / p;
    p = p.lexically_normal();
    std::error_code ec;
    if (!fs::is_directory(p, ec))
      throw ConfigError(conf.string() + ":" + std::to_string(l.line) + ": repository '" +
                        l.name + "' path does not exist: " + p.string());
    repos.push_back({l.name, p, l.priority});
  }
  std::sort(repos.begin(), repos.end(), [](const Repository& a, const Repository& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.name < b.name;
  });
  return repos;
}

void add_overlay(const fs::path& config_root, const std::string& name, const fs::path& path,
                 int priority) {
  const auto conf = repos_conf_path(config_root);
  fs::create_directories(conf.parent_path());
  const auto lock_path = conf.parent_path() / ".lock";
  {
    int fd = ::open(lock_path.c_str(), O_CREAT | O_WRONLY | O_CLOEXEC, 0644);
    if (fd < 0) throw ConfigError("cannot create " + lock_path.string());
    ::close(fd);
  }
  FileLock lock(lock_path);

  std::string text;
  std::error_code ec;
  if (fs::exists(conf, ec)) text = read_file(conf);
  for (const auto& l : parse_repos_conf(text, conf)) {
    if (l.name == name) throw ConfigError("repository '" + name + "' is already registered");
  }
  if (name.empty() || name.find_first_of(" \t=#") != std::string::npos)
    throw ConfigError("invalid repository name '" + name + "'");
  auto abs = fs::absolute(path).lexically_normal();
  if (!fs::is_directory(abs, ec) || ::access(abs.c_str(), R_OK | X_OK) != 0)
    throw ConfigError("overlay path is not a readable directory: " + abs.string());
  if (!text.empty() && text.back() != '\n') text.push_back('\n');
  text += name + " = " + abs.string() + " " + std::to_string(priority) + "\n";
  write_file_atomic(conf, text);
}

Recipe parse_recipe_text(std::string_view text, PackageId id, std::string_view origin_view) {
  const std::string origin(origin_view);
  Recipe r;
  r.id = std::move(id);

  std::string_view phase_text;
  std::size_t phase_line = 1;
  std::string header = first_phase_split(text, phase_text, phase_line);

  std::map<std::string, std::string> seen;
  const VarLookup lookup = [&seen](std::string_view name) -> std::optional<std::string> {
    auto it = seen.find(std::string(name));
    if (it == seen.end()) return std::nullopt;
    return it->second;
  };
  for (const auto& a : parse_assignments(header, origin)) {
    const auto where = origin + ":" + std::to_string(a.line);
    if (seen.contains(a.key)) throw ParseError(where + ": duplicate key " + a.key);
    auto value = expand(a.value, lookup);
    seen[a.key] = value;
    if (a.key == "DESCRIPTION") {
      r.description = value;
    } else if (a.key == "SLOT") {
      check_slot(value, where);
      r.id.slot = value;
    } else if (a.key == "IUSE") {
      for (auto& f : split_words(value)) {
        if (!valid_flag(f)) throw ParseError(where + ": invalid IUSE flag '" + f + "'");
        r.iuse.insert(std::move(f));
      }
    } else if (a.key == "KEYWORDS") {
      for (auto& k : split_words(value)) r.keywords.insert(std::move(k));
    } else if (a.key == "DEPEND") {
      r.depend = std::string(trim(value));
    } else if (a.key == "RDEPEND") {
      r.rdepend = std::string(trim(value));
    } else if (a.key == "PDEPEND") {
      r.pdepend = std::string(trim(value));
    } else if (a.key == "SRC") {
      r.src = split_words(value);
    } else if (a.key == "PATCHES") {
      r.bundled_patches = split_words(value);
    } else {
      throw ParseError(where + ": unknown key " + a.key);
    }
  }
  if (!seen.contains("SLOT")) r.id.slot = "0";

  std::string current;
  std::size_t lineno = phase_line - 1;
  std::size_t pos = 0;
  while (pos < phase_text.size()) {
    auto end = phase_text.find('\n', pos);
    auto raw = phase_text.substr(pos, end == std::string_view::npos ? phase_text.npos : end - pos);
    pos = end == std::string_view::npos ? phase_text.size() : end + 1;
    ++lineno;
    auto line = trim(raw);
    const auto where = origin + ":" + std::to_string(lineno);
    if (line.starts_with("[phase:")) {
      auto close = line.find(']');
      if (close == std::string_view::npos) throw ParseError(where + ": unterminated phase header");
      auto name = std::string(line.substr(7, close - 7));
      if (!trim(strip_comment(line.substr(close + 1))).empty())
        throw ParseError(where + ": unexpected text after phase header");
      if (!is_phase_name(name)) throw ParseError(where + ": unknown phase '" + name + "'");
      if (r.phases.contains(name)) throw ParseError(where + ": duplicate phase '" + name + "'");
      r.phases[name];
      current = name;
      continue;
    }
    auto command = std::string(trim(strip_comment(line)));
    if (command.empty()) continue;
    if (current.empty()) throw ParseError(where + ": command outside a phase block");
    r.phases[current].push_back({command, lineno});
  }

  validate_deps(r, "DEPEND", r.depend, origin);
  validate_deps(r, "RDEPEND", r.rdepend, origin);
  validate_deps(r, "PDEPEND", r.pdepend, origin);
  return r;
}

Recipe parse_recipe(const fs::path& file, const Repository& repository) {
  const auto origin = file.string();
  const auto name = file.parent_path().filename().string();
  const auto category = file.parent_path().parent_path().filename().string();
  const auto filename = file.filename().string();
  if (!filename.ends_with(recipe_suffix))
    throw ParseError(origin + ": recipe files must end in " + std::string(recipe_suffix));
  auto stem = std::string_view(filename).substr(0, filename.size() - recipe_suffix.size());
  if (!valid_category(category)) throw ParseError(origin + ": invalid category '" + category + "'");
  if (!stem.starts_with(name + "-"))
    throw ParseError(origin + ": file name does not match package directory '" + name + "'");
  auto version = try_parse_version(stem.substr(name.size() + 1));
  if (!version) throw ParseError(origin + ": cannot read version from file name");

  PackageId id{category, name, *version, "0", repository.name};
  std::string text;
  try {
    text = read_file(file);
  } catch (const Error&) {
    throw ParseError("cannot read recipe " + origin);
  }
  Recipe r = parse_recipe_text(text, std::move(id), origin);
  r.dir = file.parent_path();
  return r;
}

std::string render_recipe(const Recipe& r) {
  std::string out;
  auto line = [&out](const char* key, const std::string& value) {
    out += key;
    out += '=';
    out += quote_value(value);
    out += '\n';
  };
  auto words = [](const auto& container) {
    return join(std::vector<std::string>(container.begin(), container.end()), " ");
  };
  line("DESCRIPTION", r.description);
  line("SLOT", r.id.slot);
  line("IUSE", words(r.iuse));
  line("KEYWORDS", words(r.keywords));
  line("DEPEND", r.depend);
  line("RDEPEND", r.rdepend);
  line("PDEPEND", r.pdepend);
  line("SRC", words(r.src));
  line("PATCHES", words(r.bundled_patches));
  for (const char* phase : phase_names) {
    auto it = r.phases.find(phase);
    if (it == r.phases.end()) continue;
    out += "\n[phase:";
    out += phase;
    out += "]\n";
    for (const auto& cmd : it->second) out += cmd.text + "\n";
  }
  return out;
}

bool keywords_accepted(const std::set<std::string>& keywords,
                       const std::set<std::string>& accept) {
  for (const auto& k : keywords) {
    if (k.starts_with('~')) {
      if (accept.contains(k)) return true;
    } else if (accept.contains(k) || accept.contains("~" + k)) {
      return true;
    }
  }
  return false;
}

PackageTree PackageTree::load(const std::vector<Repository>& repos) {
  PackageTree tree;
  for (const auto& repo : repos) {
    std::vector<Recipe> recipes;
    for (const auto& cat : sorted_entries(repo.path)) {
      if (!fs::is_directory(cat) || !valid_category(cat.filename().string())) continue;
      for (const auto& pkg : sorted_entries(cat)) {
        if (!fs::is_directory(pkg)) continue;
        for (const auto& file : sorted_entries(pkg)) {
          if (!fs::is_regular_file(file) || file.extension() != recipe_suffix) continue;
          recipes.push_back(parse_recipe(file, repo));
        }
      }
    }
    tree.add_repository(repo, std::move(recipes));
  }
  return tree;
}

void PackageTree::add_repository(Repository repo, std::vector<Recipe> recipes) {
  for (const auto& r : repos_) {
    if (r.name == repo.name) throw ConfigError("duplicate repository name '" + repo.name + "'");
  }
  for (auto& recipe : recipes) {
    recipe.id.repository = repo.name;
    auto key = recipe.id.package();
    for (const auto& e : packages_[key]) {
      if (e.repo == repo.name && e.recipe->id.version == recipe.id.version)
        throw ConfigError("duplicate recipe " + recipe.id.str() + " in " + repo.name);
    }
    by_name_[recipe.id.name].insert(recipe.id.category);
    packages_[key].push_back({repo.priority, repo.name, std::make_shared<const Recipe>(std::move(recipe))});
  }
  repos_.push_back(std::move(repo));
  std::sort(repos_.begin(), repos_.end(), [](const Repository& a, const Repository& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.name < b.name;
  });
}

Atom PackageTree::qualify(const Atom& atom) const {
  if (atom.category) return atom;
  auto it = by_name_.find(atom.name);
  if (it == by_name_.end()) return atom;
  if (it->second.size() > 1) {
    std::vector<std::string> candidates;
    for (const auto& c : it->second) candidates.push_back(c + "/" + atom.name);
    throw AmbiguityError(atom.name, std::move(candidates));
  }
  Atom out = atom;
  out.category = *it->second.begin();
  return out;
}

std::vector<const Recipe*> PackageTree::find_recipes(const Atom& atom) const {
  Atom q = qualify(atom);
  std::vector<const Recipe*> out;
  if (!q.category) return out;
  auto it = packages_.find(q.package());
  if (it == packages_.end()) return out;
  Atom versionless = q;
  versionless.use_deps.clear();
  std::vector<const Entry*> matches;
  for (const auto& e : it->second) {
    if (atom_matches(versionless, e.recipe->id, {})) matches.push_back(&e);
  }
  std::sort(matches.begin(), matches.end(), [](const Entry* a, const Entry* b) {
    if (a->priority != b->priority) return a->priority > b->priority;
    if (a->repo != b->repo) return a->repo < b->repo;
    return a->recipe->id.version > b->recipe->id.version;
  });
  for (const auto* e : matches) out.push_back(e->recipe.get());
  return out;
}

const Recipe& PackageTree::best_match(const Atom& atom,
                                      const std::set<std::string>& accept_keywords) const {
  Atom q = qualify(atom);
  auto it = q.category ? packages_.find(q.package()) : packages_.end();
  if (it == packages_.end()) throw NotFoundError(atom.str());

  // The highest-priority repository carrying this package shadows the rest.
  const Entry* top = nullptr;
  for (const auto& e : it->second) {
    if (!top || e.priority > top->priority ||
        (e.priority == top->priority && e.repo < top->repo))
      top = &e;
  }
  std::set<std::string> masked_keywords;
  bool any = false;
  for (const Recipe* r : find_recipes(q)) {
    if (r->id.repository != top->repo) continue;
    any = true;
    if (keywords_accepted(r->keywords, accept_keywords)) return *r;
    masked_keywords.insert(r->keywords.begin(), r->keywords.end());
  }
  if (!any) throw NotFoundError(atom.str());
  if (masked_keywords.empty()) masked_keywords.insert("(none)");
  throw MaskedError(atom.str(), {masked_keywords.begin(), masked_keywords.end()});
}

const Recipe* PackageTree::find_exact(const std::string& category, const std::string& name,
                                      const Version& version) const {
  auto it = packages_.find(category + "/" + name);
  if (it == packages_.end()) return nullptr;
  const Entry* best = nullptr;
  for (const auto& e : it->second) {
    if (e.recipe->id.version != version) continue;
    if (!best || e.priority > best->priority) best = &e;
  }
  return best ? best->recipe.get() : nullptr;
}

std::vector<const Recipe*> PackageTree::all_recipes() const {
  std::vector<const Recipe*> out;
  for (const auto& [key, entries] : packages_) {
    for (const auto& e : entries) out.push_back(e.recipe.get());
  }
  std::sort(out.begin(), out.end(), [](const Recipe* a, const Recipe* b) {
    if (id_less(a->id, b->id)) return true;
    if (id_less(b->id, a->id)) return false;
    return a->id.repository < b->id.repository;
  });
  return out;
}

}  // namespace prefixpm
