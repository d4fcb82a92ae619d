// Acceptance checks. `acceptance 3 5` runs criteria 3 and 5; no argument
// runs all of them. One [PASS]/[FAIL] line per criterion.

#include "difftool.hpp"
#include "oracle.hpp"
#include "support.hpp"

#include <prefixpm/bootstrap.hpp>
#include <prefixpm/buildengine.hpp>
#include <prefixpm/config.hpp>
#include <prefixpm/errors.hpp>
#include <prefixpm/patch.hpp>
#include <prefixpm/textfile.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
namespace ts = testsupport;
using namespace prefixpm;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fixed(double v) {
  std::ostringstream s;
  s.precision(2);
  s << std::fixed << v;
  return s.str();
}

std::set<std::string> words(const std::string& text) {
  auto w = split_words(text);
  return {w.begin(), w.end()};
}

std::string show(const std::set<std::string>& s) {
  return "{" + join(std::vector<std::string>(s.begin(), s.end()), " ") + "}";
}

std::string show_result(const ts::ProcessResult& r) {
  return "exit " + std::to_string(r.status) + "\n--- stdout\n" + r.out + "--- stderr\n" + r.err;
}

// Second field of each plan line: category/name-version:slot
std::vector<std::string> planned_ids(const std::string& stdout_text) {
  std::vector<std::string> out;
  for (const auto& line : ts::lines(stdout_text)) {
    auto w = split_words(line);
    if (w.size() >= 2) out.push_back(w[1]);
  }
  return out;
}

// A config root C and an empty target root R in one scratch directory.
struct Site {
  TempDir scratch{"pm-accept"};
  fs::path root = scratch.path() / "root";
  fs::path config = scratch.path() / "config";

  explicit Site(const std::string& config_name) {
    fs::create_directories(root);
    ts::install_config(config_name, config);
  }

  ts::ProcessResult pm(std::vector<std::string> args) const {
    std::vector<std::string> full{"--root", root.string(), "--config-root", config.string(),
                                  "--prefix", "/"};
    full.insert(full.end(), args.begin(), args.end());
    return ts::run_pm(full);
  }
};

// ---------------------------------------------------------------------------

std::string resolver_oracle() {
  const auto start = std::chrono::steady_clock::now();
  std::size_t exhaustive = 0;
  std::size_t sampled = 0;
  std::size_t infeasible = 0;
  std::vector<std::string> failures;
  auto check = [&](const oracle::Graph& g) {
    if (!oracle::feasible(g)) ++infeasible;
    if (auto why = oracle::compare(g); !why.empty() && failures.size() < 5) failures.push_back(why);
  };

  // Every labelled digraph on up to three packages, with every installed
  // subset of the non-target packages.
  for (int n = 1; n <= 3; ++n) {
    for (std::uint64_t code = 0; code < oracle::graph_count(n); ++code) {
      auto g = oracle::graph_from_code(n, code);
      for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
        for (int i = 1; i < n; ++i) g.installed[static_cast<std::size_t>(i)] = (mask >> (i - 1)) & 1u;
        check(g);
        ++exhaustive;
      }
    }
  }
  // Every labelling of the four-package DAG skeleton u -> v (u < v).
  for (std::uint64_t code = 0; code < 4096; ++code) {
    oracle::Graph g;
    g.n = 4;
    g.edges.assign(16, oracle::Edge::none);
    g.installed.assign(4, false);
    std::uint64_t c = code;
    for (int u = 0; u < 4; ++u) {
      for (int v = u + 1; v < 4; ++v) {
        g.edges[static_cast<std::size_t>(u * 4 + v)] = static_cast<oracle::Edge>(c % 4);
        c /= 4;
      }
    }
    check(g);
    ++exhaustive;
  }
  // Random digraphs (cycles allowed) on four to six packages.
  std::mt19937_64 rng(20161116);
  for (int n = 4; n <= 6; ++n) {
    for (int k = 0; k < 3000; ++k) {
      oracle::Graph g;
      g.n = n;
      g.edges.assign(static_cast<std::size_t>(n * n), oracle::Edge::none);
      g.installed.assign(static_cast<std::size_t>(n), false);
      for (int u = 0; u < n; ++u) {
        for (int v = 0; v < n; ++v) {
          if (u == v) continue;
          auto roll = rng() % 100;
          auto e = roll < 60 ? oracle::Edge::none
                   : roll < 75 ? oracle::Edge::depend
                   : roll < 90 ? oracle::Edge::rdepend
                               : oracle::Edge::pdepend;
          g.edges[static_cast<std::size_t>(u * n + v)] = e;
        }
      }
      for (int i = 1; i < n; ++i) g.installed[static_cast<std::size_t>(i)] = rng() % 100 < 15;
      check(g);
      ++sampled;
    }
  }
  const double elapsed = seconds_since(start);
  expect(failures.empty(), "disagreements:\n  " + join(failures, "\n  "));
  expect(exhaustive >= 3000, "only " + std::to_string(exhaustive) + " exhaustive graphs");
  expect(infeasible > 0, "no infeasible graph was generated");
  expect(elapsed < 60.0, "took " + fixed(elapsed) + " s");
  return std::to_string(exhaustive) + " exhaustive + " + std::to_string(sampled) +
         " random graphs agree (" + std::to_string(infeasible) + " infeasible), " + fixed(elapsed) +
         " s";
}

// ---------------------------------------------------------------------------

std::string random_version_text(std::mt19937_64& rng) {
  auto pick = [&rng](unsigned n) { return static_cast<unsigned>(rng() % n); };
  std::string v = std::to_string(pick(3));
  for (unsigned i = 0, extra = pick(3); i < extra; ++i) v += "." + std::to_string(pick(3));
  if (pick(4) == 0) v += static_cast<char>('a' + pick(2));
  if (pick(5) < 2) {
    static const char* kinds[] = {"alpha", "beta", "pre", "rc", "p"};
    v += "_" + std::string(kinds[pick(5)]);
    if (auto num = pick(3); num) v += std::to_string(num);
  }
  if (pick(3) == 0) v += "-r" + std::to_string(1 + pick(2));
  return v;
}

std::string version_order() {
  // Hand-ordered, strictly increasing.
  const std::vector<std::string> ladder = {
      "0.9",    "1.0_alpha", "1.0_alpha1", "1.0_beta2", "1.0_pre1", "1.0_rc2", "1.0",
      "1.0-r1", "1.0_p1",    "1.0a",       "1.0.0",     "1.2",      "1.10",    "2.7_rc1",
      "2.7",    "2.7.0",     "2.7.12",     "3.2.1",     "3.2.1-r1", "3.3"};
  std::size_t pairs = 0;
  std::vector<std::string> wrong;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    for (std::size_t j = i + 1; j < ladder.size(); ++j) {
      const auto a = parse_version(ladder[i]);
      const auto b = parse_version(ladder[j]);
      ++pairs;
      if (compare_versions(a, b) != std::strong_ordering::less ||
          compare_versions(b, a) != std::strong_ordering::greater)
        wrong.push_back(ladder[i] + " vs " + ladder[j]);
    }
  }
  expect(pairs == 190, "expected 190 pairs, compared " + std::to_string(pairs));
  expect(wrong.empty(), "misordered: " + join(wrong, ", "));

  std::mt19937_64 rng(271);
  std::size_t equal_pairs = 0;
  for (int k = 0; k < 10000; ++k) {
    const auto a = parse_version(random_version_text(rng));
    const auto b = parse_version(random_version_text(rng));
    const auto c = parse_version(random_version_text(rng));
    const std::string where = a.str() + " " + b.str() + " " + c.str();
    for (const auto* x : {&a, &b, &c}) {
      for (const auto* y : {&a, &b, &c}) {
        const auto xy = compare_versions(*x, *y);
        const auto yx = compare_versions(*y, *x);
        const int outcomes = (xy < 0) + (xy == 0) + (xy > 0);
        expect(outcomes == 1, "totality fails for " + where);
        expect((xy < 0) == (yx > 0) && (xy == 0) == (yx == 0), "asymmetric comparison in " + where);
        if (xy <= 0 && yx <= 0)
          expect(x->str() == y->str(), "antisymmetry fails: " + x->str() + " vs " + y->str());
        if (xy == 0) ++equal_pairs;
        for (const auto* z : {&a, &b, &c}) {
          if (xy <= 0 && compare_versions(*y, *z) <= 0)
            expect(compare_versions(*x, *z) <= 0, "transitivity fails for " + where);
        }
      }
    }
  }
  return "190/190 ladder pairs ordered, 10000 random triples lawful (" +
         std::to_string(equal_pairs) + " equal pairs seen)";
}

// ---------------------------------------------------------------------------

const std::set<std::string> python_closure = {
    "dev-lang/python-2.7.12:2.7", "dev-libs/libffi-3.2.1:0", "sys-libs/ncurses-6.0:0",
    "sys-libs/readline-7.0:0", "sys-libs/zlib-1.2.11:0"};

// Provider -> dependent pairs read off the fixture recipes by hand.
const std::vector<std::pair<std::string, std::string>> python_closure_edges = {
    {"dev-libs/libffi-3.2.1:0", "dev-lang/python-2.7.12:2.7"},
    {"sys-libs/ncurses-6.0:0", "dev-lang/python-2.7.12:2.7"},
    {"sys-libs/readline-7.0:0", "dev-lang/python-2.7.12:2.7"},
    {"sys-libs/zlib-1.2.11:0", "dev-lang/python-2.7.12:2.7"},
    {"sys-libs/ncurses-6.0:0", "sys-libs/readline-7.0:0"}};

std::string python_closure_check() {
  Site site("k1om");
  const auto merged = site.pm({"merge", "python:2.7"});
  expect(merged.status == 0, "merge failed:\n" + show_result(merged));
  const auto order = planned_ids(merged.out);
  expect(std::set<std::string>(order.begin(), order.end()) == python_closure && order.size() == 5,
         "plan is not the 5-package closure:\n" + merged.out);
  for (const auto& [provider, dependent] : python_closure_edges) {
    auto p = std::find(order.begin(), order.end(), provider);
    auto d = std::find(order.begin(), order.end(), dependent);
    expect(p < d, provider + " is not placed before " + dependent);
  }

  const auto installed = ts::run_pm({"--root", site.root.string(), "query", "installed"});
  auto listed = ts::lines(installed.out);
  expect(installed.status == 0 && std::set<std::string>(listed.begin(), listed.end()) == python_closure &&
             listed.size() == 5,
         "installed set differs:\n" + show_result(installed));

  const auto binary = site.root / "usr" / "bin" / "python2.7";
  const auto inspect = ts::run_pm({"inspect", binary.string()});
  expect(inspect.status == 0 && inspect.out == "Machine: x86_64-k1om-linux-gnu\n",
         "inspect printed:\n" + show_result(inspect));
  return "order " + join(order, " ") + "; " + inspect.out.substr(0, inspect.out.size() - 1);
}

// ---------------------------------------------------------------------------

std::string quoted_value(const std::string& text, const std::string& key) {
  for (const auto& line : ts::lines(text)) {
    if (line.rfind(key + "=\"", 0) == 0) {
      auto body = line.substr(key.size() + 2);
      return body.substr(0, body.find('"'));
    }
  }
  return {};
}

std::string use_semantics() {
  Site site("k1om");
  // Independent reading of the layering: left to right, "-*" clears.
  std::set<std::string> global;
  for (const auto& token : split_words(quoted_value(ts::slurp(site.config / "etc/pm/make.conf"), "USE"))) {
    if (token == "-*") global.clear();
    else if (token.starts_with('-')) global.erase(token.substr(1));
    else global.insert(token);
  }
  const auto iuse = words(quoted_value(
      ts::slurp(ts::tree() / "dev-lang/python/python-2.7.12.recipe"), "IUSE"));
  std::set<std::string> expected;
  std::set_intersection(global.begin(), global.end(), iuse.begin(), iuse.end(),
                        std::inserter(expected, expected.begin()));
  expect(iuse.contains("tk") && !expected.contains("tk"), "fixture IUSE lost its tk control flag");
  expect(expected == std::set<std::string>{"ncurses", "python", "readline", "threads", "unicode", "xml"},
         "oracle intersection unexpectedly " + show(expected));

  const auto merged = site.pm({"merge", "python:2.7"});
  expect(merged.status == 0, "merge failed:\n" + show_result(merged));
  const auto recorded = words(ts::slurp(site.root / "var/db/pm/dev-lang/python-2.7.12/USE"));
  expect(recorded == expected, "VDB USE " + show(recorded) + " != " + show(expected));
  return "VDB USE " + show(recorded);
}

// ---------------------------------------------------------------------------

std::string package_env() {
  Site site("native");
  auto first = site.pm({"merge", "dev-lang/R", "app-misc/hello", "dev-lang/python:2.7"});
  expect(first.status == 0, "initial merge failed:\n" + show_result(first));
  const auto before_vdb = Vdb::open(site.root, "");
  expect(before_vdb.entries().size() >= 7, "expected at least 7 installed packages");
  const auto* r_before = before_vdb.find("dev-lang", "R", parse_version("3.3.1"));
  expect(r_before && r_before->build_env.at("CFLAGS") == "-O2 -pipe", "R not built with make.conf CFLAGS");
  const auto before = ts::snapshot(site.root);

  const auto nothing = site.pm({"merge", "--changed-use"});
  expect(nothing.status == 0 && nothing.out.empty(), "rebuilds before any change:\n" + show_result(nothing));

  write_file_atomic(site.config / "etc/pm/package.env", "dev-lang/R debug-cflags.conf\n");
  fs::create_directories(site.config / "etc/pm/env");
  fs::copy_file(ts::fixtures() / "configs/debug-cflags.conf", site.config / "etc/pm/env/debug-cflags.conf");

  const auto rebuilt = site.pm({"merge", "--changed-use"});
  expect(rebuilt.status == 0, "changed-use merge failed:\n" + show_result(rebuilt));
  const auto plan = ts::lines(rebuilt.out);
  expect(plan.size() == 1 && plan[0].starts_with("changed-use-rebuild dev-lang/R-3.3.1:0 "),
         "plan is not exactly the R rebuild:\n" + rebuilt.out);

  const auto after_vdb = Vdb::open(site.root, "");
  const auto* r_after = after_vdb.find("dev-lang", "R", parse_version("3.3.1"));
  expect(r_after && r_after->build_env.at("CFLAGS") == "-O2 -ggdb -pipe",
         "R BUILD_ENV CFLAGS is not -O2 -ggdb -pipe");
  for (const auto& e : before_vdb.entries()) {
    if (e.id.name == "R") continue;
    const auto* now = after_vdb.find(e.id.category, e.id.name, e.id.version);
    expect(now && *now == e, e.id.str() + " changed in the VDB");
  }
  // Only R's files and VDB entry may differ on disk.
  const auto after = ts::snapshot(site.root);
  const std::vector<std::string> r_paths = {"usr/lib/R", "usr/lib/debug", "var/db/pm/dev-lang/R-3.3.1"};
  for (const auto& line : ts::lines(ts::describe_difference(before, after))) {
    const auto path = line.substr(2);
    bool r_owned = std::any_of(r_paths.begin(), r_paths.end(), [&](const std::string& p) {
      return path == p || path.starts_with(p + "/");
    });
    expect(r_owned, "path outside R changed: " + line);
  }
  expect(fs::exists(site.root / "usr/lib/debug/usr/lib/R/lib/libR.so.debug"),
         "splitdebug did not relocate libR.so.debug");
  return "1 rebuild (dev-lang/R), CFLAGS \"" + r_after->build_env.at("CFLAGS") + "\", " +
         std::to_string(before_vdb.entries().size() - 1) + " other packages untouched";
}

// ---------------------------------------------------------------------------

std::string user_patches() {
  const fs::path patch_rel = "etc/pm/patches/dev-libs";
  const std::string patch_name = "libffi-3.2.1-k1om.patch";
  auto attempt = [&](const std::string& layout, const std::string& version) {
    Site site("k1om");
    const auto patches = site.config / patch_rel;
    const auto original = patches / "libffi-3.2.1" / patch_name;
    const auto text = ts::slurp(original);
    fs::remove_all(patches);
    if (!layout.empty()) {
      fs::create_directories(patches / layout);
      write_file_atomic(patches / layout / patch_name, text);
    }
    auto r = site.pm({"merge", "=dev-libs/libffi-" + version});
    bool installed = fs::exists(site.root / "var/db/pm/dev-libs" / ("libffi-" + version));
    if (r.status == 0) {
      auto m = ts::run_pm({"inspect", (site.root / "usr/lib/libffi.so").string()});
      expect(m.out == "Machine: x86_64-k1om-linux-gnu\n", "patched libffi has wrong machine: " + m.out);
    }
    return std::make_pair(r, installed);
  };

  auto [none, none_installed] = attempt("", "3.2.1");
  expect(none.status == 4 && !none_installed && none.err.find("k1om") != std::string::npos,
         "unpatched libffi-3.2.1 should fail the build:\n" + show_result(none));

  auto [scoped, scoped_installed] = attempt("libffi-3.2.1", "3.2.1");
  expect(scoped.status == 0 && scoped_installed,
         "version-scoped patch did not fix libffi-3.2.1:\n" + show_result(scoped));
  auto [scoped_other, scoped_other_installed] = attempt("libffi-3.2.1", "3.3");
  expect(scoped_other.status == 4 && !scoped_other_installed,
         "version-scoped patch leaked to libffi-3.3:\n" + show_result(scoped_other));

  for (const auto* version : {"3.2.1", "3.3"}) {
    auto [any, any_installed] = attempt("libffi", version);
    expect(any.status == 0 && any_installed,
           std::string("unversioned patch did not apply to libffi-") + version + ":\n" + show_result(any));
  }
  return "no patch: build error; libffi-3.2.1/: 3.2.1 builds, 3.3 fails; libffi/: 3.2.1 and 3.3 build";
}

// ---------------------------------------------------------------------------

std::set<std::string> owned_paths(const Vdb& vdb) {
  std::set<std::string> out;
  for (const auto& e : vdb.entries())
    for (const auto& c : e.contents) out.insert(c.path.substr(1));
  return out;
}

std::set<std::string> installed_paths(const fs::path& root) {
  std::set<std::string> out;
  for (const auto& [path, what] : ts::snapshot(root)) {
    if (path == "var" || path.starts_with("var/")) continue;
    out.insert(path);
  }
  return out;
}

std::string slot_coexistence() {
  Site site("native");
  for (const auto* target : {"python:2.7", "python:3.5"}) {
    auto r = site.pm({"merge", target});
    expect(r.status == 0, std::string("merge ") + target + " failed:\n" + show_result(r));
  }
  {
    const auto vdb = Vdb::open(site.root, "");
    expect(vdb.find("dev-lang", "python", parse_version("2.7.12")) &&
               vdb.find("dev-lang", "python", parse_version("3.5.2")),
           "both python slots should be installed");
    expect(installed_paths(site.root) == owned_paths(vdb), "files and CONTENTS disagree before upgrade");
  }
  const auto old_files = owned_paths(Vdb::open(site.root, ""));

  ts::write_repos_conf(site.config, {{"main", ts::tree(), 0}, {"upgrade", ts::overlay("upgrade"), 10}});
  auto up = site.pm({"merge", "python:2.7"});
  expect(up.status == 0, "upgrade failed:\n" + show_result(up));
  expect(planned_ids(up.out) == std::vector<std::string>{"dev-lang/python-2.7.14:2.7"},
         "upgrade plan:\n" + up.out);

  const auto vdb = Vdb::open(site.root, "");
  expect(!vdb.find("dev-lang", "python", parse_version("2.7.12")), "python-2.7.12 still recorded");
  expect(vdb.find("dev-lang", "python", parse_version("2.7.14")) &&
             vdb.find("dev-lang", "python", parse_version("3.5.2")),
         "expected python 2.7.14 and 3.5.2 after the upgrade");

  // Expected manifest: what was there, minus 2.7.12's site.py, plus NEWS.
  auto expected = old_files;
  expected.erase("usr/lib/python2.7/site.py");
  expected.insert("usr/lib/python2.7/NEWS");
  const auto actual = installed_paths(site.root);
  std::vector<std::string> extra;
  std::vector<std::string> missing;
  std::set_difference(actual.begin(), actual.end(), expected.begin(), expected.end(), std::back_inserter(extra));
  std::set_difference(expected.begin(), expected.end(), actual.begin(), actual.end(), std::back_inserter(missing));
  expect(extra.empty() && missing.empty(),
         "orphans: " + join(extra, " ") + "; missing: " + join(missing, " "));
  expect(owned_paths(vdb) == actual, "some installed path is not in any CONTENTS");
  return "2.7 and 3.5 coexist; 2.7.12 -> 2.7.14 leaves " + std::to_string(actual.size()) +
         " paths, 0 orphans";
}

// ---------------------------------------------------------------------------

std::string merge_round_trip() {
  TempDir scratch("pm-accept");
  const auto root = scratch.path() / "root";
  const auto config_root = scratch.path() / "config";
  ts::install_config("native", config_root);
  fs::create_directories(root / "etc");
  fs::create_directories(root / "usr/bin");
  write_file_atomic(root / "etc/hosts", "127.0.0.1 localhost\n");
  write_file_atomic(root / "usr/bin/existing", "#!/bin/sh\n");
  const auto config = load_config(config_root, root, "");

  struct Source {
    std::vector<Repository> repos;
    std::string repo;
  };
  const std::vector<Source> sources = {
      {{{"main", ts::tree(), 0}}, "main"},
      {{{"kde", ts::overlay("kde"), 10}, {"main", ts::tree(), 0}}, "kde"},
      {{{"upgrade", ts::overlay("upgrade"), 10}, {"main", ts::tree(), 0}}, "upgrade"},
  };
  ExecuteOptions exec;
  exec.env_overrides["PM_BINARY"] = ts::pm_binary().string();

  const auto pristine = ts::snapshot(root);
  std::size_t packages = 0;
  std::size_t failing = 0;
  for (const auto& source : sources) {
    const auto repos = PackageTree::load(source.repos);
    for (const auto* recipe : repos.all_recipes()) {
      if (recipe->id.repository != source.repo) continue;
      const auto atom = parse_atom("=" + recipe->id.str());
      auto vdb = Vdb::open(root, "");
      const auto plan = solve({atom}, config, nullptr, vdb, repos);
      exec.targets = {atom};
      try {
        execute_plan(plan, config, vdb, exec);
      } catch (const BuildError& e) {
        // Fixtures that are meant to fail must leave the root untouched.
        expect(recipe->id.name == "broken", recipe->id.str() + " failed: " + e.what());
        ++failing;
      }
      auto reopened = Vdb::open(root, "");
      {
        FileLock lock(reopened.base());
        for (auto it = plan.actions.rbegin(); it != plan.actions.rend(); ++it) {
          const auto& id = it->recipe.id;
          if (reopened.find(id.category, id.name, id.version)) unmerge(id, reopened);
        }
      }
      const auto diff = ts::describe_difference(pristine, ts::snapshot(root));
      expect(diff.empty(), "merge+unmerge of " + recipe->id.str() + " left:\n" + diff);
      ++packages;
    }
  }
  expect(failing == 1, "expected exactly the broken fixture to fail");

  // A file edited after install survives unmerge, byte for byte.
  const auto repos = PackageTree::load(sources[0].repos);
  auto vdb = Vdb::open(root, "");
  const auto hello = parse_atom("app-misc/hello");
  exec.targets = {hello};
  execute_plan(solve({hello}, config, nullptr, vdb, repos), config, vdb, exec);
  const auto edited = root / "usr/share/hello/greeting.txt";
  expect(fs::is_regular_file(edited), "hello did not install greeting.txt");
  const std::string changed = ts::slurp(edited) + "edited by the user\n";
  write_file_atomic(edited, changed);
  {
    FileLock lock(vdb.base());
    unmerge(vdb.find_package("app-misc", "hello").front()->id, vdb);
  }
  const std::set<std::string> allowed = {"usr/share", "usr/share/hello", "usr/share/hello/greeting.txt"};
  for (const auto& line : ts::lines(ts::describe_difference(pristine, ts::snapshot(root)))) {
    expect(line.starts_with("+ ") && allowed.contains(line.substr(2)), "unexpected leftover: " + line);
  }
  expect(fs::exists(edited) && ts::slurp(edited) == changed, "user-modified file was not preserved");
  return std::to_string(packages) + " packages round-trip byte-identical (1 failing build left no trace); edited file kept";
}

// ---------------------------------------------------------------------------

std::string bootstrap_check() {
  TempDir scratch("pm-accept");
  const auto prefix = scratch.path() / "gentoo";
  const auto tmp = scratch.path() / "tmp";
  fs::create_directories(tmp);
  const std::map<std::string, std::optional<std::string>> env = {{"TMPDIR", tmp.string()}};

  const auto start = std::chrono::steady_clock::now();
  auto run = ts::run_pm({"bootstrap", "--prefix", prefix.string()}, env);
  const double elapsed = seconds_since(start);
  expect(run.status == 0, "bootstrap failed:\n" + show_result(run));
  expect(elapsed < 30.0, "bootstrap took " + fixed(elapsed) + " s");
  for (int s = 1; s <= 3; ++s)
    expect(run.out.find("stage " + std::to_string(s) + " complete") != std::string::npos,
           "stage " + std::to_string(s) + " not reported:\n" + run.out);
  expect(completed_stage(prefix) == 3, "stage marker is not 3");
  expect(fs::is_empty(tmp), "build scratch left behind in TMPDIR");
  for (const auto& entry : fs::directory_iterator(scratch.path())) {
    expect(entry.path() == prefix || entry.path() == tmp, "bootstrap wrote outside the prefix: " + entry.path().string());
  }
  {
    const auto vdb = Vdb::open("/", prefix.string());
    expect(vdb.entries().size() == 5, "expected the 5-package system set in the prefix VDB");
    for (const auto& e : vdb.entries())
      expect(e.build_env.at("CC") == bootstrapped_cc, e.id.str() + " was not rebuilt with the prefix toolchain");
  }

  const std::string session_script =
      "echo \"EPREFIX=$EPREFIX\"; command -v pm; pm query installed";
  auto session = ts::run_process({"/bin/sh", (prefix / "startprefix").string(), "/bin/sh", "-c", session_script},
                                 {{"SHELL", std::nullopt}});
  const auto out = ts::lines(session.out);
  expect(session.status == 0 && out.size() == 8, "startprefix session:\n" + show_result(session));
  expect(out[0] == "Entering Prefix " + prefix.string(), "banner: " + out[0]);
  expect(out[1] == "EPREFIX=" + prefix.string(), "session " + out[1]);
  expect(out[2] == (prefix / "usr/bin/pm").string(), "pm resolves to " + out[2]);

  // Interrupted after stage 2, then resumed through the CLI.
  const auto uninterrupted = ts::snapshot(prefix);
  fs::remove_all(prefix);
  {
    const auto repos = PackageTree::load({{"main", ts::tree(), 0}});
    BootstrapOptions options;
    options.pm_binary = ts::pm_binary();
    options.stop_after_stage = 2;
    auto report = execute_bootstrap(plan_bootstrap(prefix, false, default_system_set()), repos,
                                    empty_config(), options);
    expect(report.stages_run == std::vector<int>{1, 2}, "interrupted run did not stop after stage 2");
    expect(completed_stage(prefix) == 2, "stage marker after interruption is not 2");
  }
  auto resumed = ts::run_pm({"bootstrap", "--prefix", prefix.string()}, env);
  expect(resumed.status == 0 && resumed.out.find("stage 3 complete") != std::string::npos &&
             resumed.out.find("stage 1 complete") == std::string::npos,
         "resume did not run stage 3 alone:\n" + show_result(resumed));
  const auto diff = ts::describe_difference(uninterrupted, ts::snapshot(prefix));
  expect(diff.empty(), "resumed prefix differs:\n" + diff);
  return "3 stages in " + fixed(elapsed) + " s; startprefix session finds " + out[2] +
         "; resumed prefix identical (" + std::to_string(uninterrupted.size()) + " paths)";
}

// ---------------------------------------------------------------------------

using Files = std::map<std::string, std::string>;

Files read_tree(const fs::path& dir) {
  Files out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[e.path().lexically_relative(dir).generic_string()] = ts::slurp(e.path());
  }
  return out;
}

void write_tree(const fs::path& dir, const Files& files) {
  for (const auto& [rel, text] : files) {
    fs::create_directories((dir / rel).parent_path());
    write_file_atomic(dir / rel, text);
  }
}

std::string random_text(std::mt19937_64& rng) {
  static const char* vocabulary[] = {"alpha", "beta", "gamma", "delta", "", "}", "return 0;"};
  std::string out;
  const auto n = rng() % 12;
  for (std::size_t i = 0; i < n; ++i) out += std::string(vocabulary[rng() % 7]) + "\n";
  if (!out.empty() && rng() % 6 == 0) out.pop_back();
  return out;
}

std::string mutate(std::string text, std::mt19937_64& rng) {
  auto parts = ts::lines(text);
  const bool final_newline = text.empty() || text.back() == '\n';
  const auto edits = 1 + rng() % 4;
  for (std::size_t e = 0; e < edits; ++e) {
    const auto op = rng() % 3;
    const auto pos = parts.empty() ? 0 : rng() % (parts.size() + (op == 0 ? 1 : 0));
    if (op == 0 || parts.empty()) parts.insert(parts.begin() + static_cast<long>(std::min<std::size_t>(pos, parts.size())), "new " + std::to_string(rng() % 100));
    else if (op == 1) parts.erase(parts.begin() + static_cast<long>(pos));
    else parts[pos] = "changed " + std::to_string(rng() % 100);
  }
  std::string out;
  for (const auto& p : parts) out += p + "\n";
  if (!out.empty() && (rng() % 8 == 0 ? final_newline : !final_newline)) out.pop_back();
  return out;
}

std::string patch_applier() {
  std::mt19937_64 rng(3321);
  const char* names[] = {"main.c", "src/util.c", "doc/notes.txt"};
  std::size_t hunks_seen = 0;
  for (int round = 0; round < 500; ++round) {
    Files before;
    Files after;
    std::string diff;
    const auto file_count = 1 + rng() % 3;
    for (std::size_t f = 0; f < file_count; ++f) {
      const std::string name = names[f];
      const auto kind = rng() % 10;
      std::optional<std::string> old_text;
      std::optional<std::string> new_text;
      if (kind == 0) {
        new_text = random_text(rng);
      } else if (kind == 1) {
        old_text = random_text(rng);
      } else {
        old_text = random_text(rng);
        do new_text = mutate(*old_text, rng);
        while (*new_text == *old_text);
      }
      if (old_text) before[name] = *old_text;
      if (new_text) after[name] = *new_text;
      diff += difftool::unified_diff(name, old_text, new_text);
    }
    for (const auto& fp : parse_patch(diff)) hunks_seen += fp.hunks.size();

    TempDir work("pm-patch");
    write_tree(work.path(), before);
    const std::string where = "round " + std::to_string(round) + ":\n" + diff;
    try {
      apply_patch(diff, work.path());
      expect(read_tree(work.path()) == after, "forward result differs in " + where);
      apply_patch(diff, work.path(), {.strip = 1, .reverse = true});
      expect(read_tree(work.path()) == before, "reverse result differs in " + where);
    } catch (const Error& e) {
      throw Failure(std::string(e.what()) + " in " + where);
    }
  }

  // Two files, the second no longer matching: nothing may change.
  TempDir work("pm-patch");
  const Files base = {{"a.txt", "one\ntwo\nthree\n"}, {"b.txt", "red\ngreen\nblue\n"}};
  const std::string diff = difftool::unified_diff("a.txt", base.at("a.txt"), "one\nTWO\nthree\n") +
                           difftool::unified_diff("b.txt", base.at("b.txt"), "red\nGREEN\nblue\n");
  Files drifted = base;
  drifted["b.txt"] = "red\nteal\nblue\n";
  write_tree(work.path(), drifted);
  bool raised = false;
  try {
    apply_patch(diff, work.path());
  } catch (const PatchError& e) {
    raised = true;
    expect(e.file() == "b.txt" && e.hunk() == 1,
           "error names " + e.file() + " hunk " + std::to_string(e.hunk()));
  }
  expect(raised, "partial mismatch was not reported");
  expect(read_tree(work.path()) == drifted, "partial mismatch modified the tree");
  return "500 random multi-file diffs (" + std::to_string(hunks_seen) +
         " hunks) round-trip; partial mismatch rejected with b.txt hunk 1 and no changes";
}

struct Criterion {
  int number;
  const char* title;
  std::function<std::string()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "resolver oracle equivalence", resolver_oracle},
      {2, "version order laws", version_order},
      {3, "python closure with k1om CHOST", python_closure_check},
      {4, "USE semantics", use_semantics},
      {5, "package.env changed-use rebuild", package_env},
      {6, "user patches", user_patches},
      {7, "SLOT coexistence and same-slot upgrade", slot_coexistence},
      {8, "merge/unmerge round trip", merge_round_trip},
      {9, "bootstrap", bootstrap_check},
      {10, "patch applier", patch_applier},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  set_warning_sink([](const std::string&) {});
  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.contains(c.number)) continue;
    try {
      const auto detail = c.run();
      std::cout << "[PASS] " << c.number << " " << c.title << ": " << detail << std::endl;
    } catch (const std::exception& e) {
      ++failed;
      std::cout << "[FAIL] " << c.number << " " << c.title << ": " << e.what() << std::endl;
    }
  }
  return failed == 0 ? 0 : 1;
}
