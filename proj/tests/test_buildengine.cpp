#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include <prefixpm/buildengine.hpp>
#include <prefixpm/digest.hpp>
#include <prefixpm/errors.hpp>

using namespace prefixpm;
namespace ts = testsupport;

namespace {

struct Target {
  TempDir scratch{"pm-engine"};
  fs::path root = scratch.path() / "root";
  fs::path config_root = scratch.path() / "config";
  std::string eprefix;
  Config config;
  PackageTree repos = PackageTree::load({{"main", ts::tree(), 0}});

  explicit Target(std::string prefix = "", const std::string& config_name = "native")
      : eprefix(std::move(prefix)) {
    fs::create_directories(root);
    ts::install_config(config_name, config_root);
    config = load_config(config_root, root, eprefix);
  }

  Vdb vdb() const { return Vdb::open(root, eprefix); }

  void merge(const std::string& text) {
    auto db = vdb();
    const auto atom = parse_atom(text);
    ExecuteOptions options;
    options.targets = {atom};
    execute_plan(solve({atom}, config, nullptr, db, repos), config, db, options);
  }

  void unmerge_all(const std::string& category, const std::string& name) {
    auto db = vdb();
    FileLock lock(db.base());
    for (const auto* e : db.find_package(category, name)) prefixpm::unmerge(e->id, db);
  }
};

BuildContext bare_context(const BuildArea& area) {
  BuildContext ctx;
  ctx.S = area.work();
  ctx.D = area.image();
  ctx.distfiles = area.distfiles();
  fs::create_directories(ctx.S);
  fs::create_directories(ctx.D);
  ctx.chost = "x86_64-k1om-linux-gnu";
  ctx.cbuild = "x86_64-pc-linux-gnu";
  ctx.env = {{"CHOST", ctx.chost}, {"PATH", "/usr/bin:/bin"}, {"CFLAGS", "-O3"}};
  return ctx;
}

}  // namespace

TEST_CASE("toy compiler records the machine") {
  BuildArea area;
  auto ctx = bare_context(area);
  write_file_atomic(ctx.S / "a.c", "int main;\n");
  auto r = interpret_command("toycc a.c -O2 -o a.out", ctx);
  REQUIRE(r.status == 0);
  CHECK(inspect_machine(ctx.S / "a.out") == "x86_64-k1om-linux-gnu");
  auto art = parse_toy_artifact(ts::slurp(ctx.S / "a.out"), "a.out");
  CHECK(art.cflags == "-O3");
  CHECK(art.payload.find("int main;") != std::string::npos);

  CHECK_THROWS_AS(parse_toy_artifact("not an artifact", "x"), FormatError);
  CHECK_THROWS_AS(inspect_machine(ctx.S / "a.c"), FormatError);
}

TEST_CASE("toy compiler failures") {
  BuildArea area;
  auto ctx = bare_context(area);
  write_file_atomic(ctx.S / "bad.c", "#error nope\n");
  CHECK(interpret_command("toycc bad.c -o bad", ctx).status != 0);
  write_file_atomic(ctx.S / "ffi.c", "#machine-error k1om no trampoline for k1om\n");
  auto r = interpret_command("toycc ffi.c -o ffi", ctx);
  CHECK(r.status != 0);
  CHECK(r.output.find("no trampoline for k1om") != std::string::npos);
  ctx.env["CHOST"] = ctx.chost = "x86_64-pc-linux-gnu";
  CHECK(interpret_command("toycc ffi.c -o ffi", ctx).status == 0);
}

TEST_CASE("writes outside S and D are refused") {
  BuildArea area;
  auto ctx = bare_context(area);
  TempDir outside;
  CHECK_THROWS_AS(interpret_command("echo-to " + (outside.path() / "x").string() + " hi", ctx), SandboxError);
  CHECK_THROWS_AS(interpret_command("make-dir ../escape", ctx), SandboxError);
  CHECK_FALSE(fs::exists(outside.path() / "x"));
  CHECK(interpret_command("echo-to " + (ctx.D / "ok").string() + " hi there", ctx).status == 0);
  CHECK(ts::slurp(ctx.D / "ok") == "hi there\n");
}

TEST_CASE("external programs run in S with the build environment") {
  BuildArea area;
  auto ctx = bare_context(area);
  auto r = interpret_command("sh -c 'echo $CFLAGS > flags.txt; pwd'", ctx);
  REQUIRE(r.status == 0);
  CHECK(ts::slurp(ctx.S / "flags.txt") == "-O3\n");
  CHECK(r.output.find(ctx.S.filename().string()) != std::string::npos);
  CHECK(interpret_command("no-such-program-xyz", ctx).status != 0);
  CHECK(interpret_command("fail on purpose", ctx).status != 0);
}

TEST_CASE("phase failure reports the phase") {
  Target t;
  try {
    t.merge("app-misc/broken");
    FAIL("broken should not build");
  } catch (const PhaseError& e) {
    CHECK(e.phase() == "compile");
    CHECK(e.line() > 0);
  }
  CHECK(t.vdb().entries().empty());
}

TEST_CASE("merge installs files and records contents") {
  Target t;
  t.merge("app-misc/hello");
  CHECK(fs::is_regular_file(t.root / "usr/bin/hello"));
  CHECK(fs::read_symlink(t.root / "usr/bin/hi") == "hello");
  CHECK(ts::slurp(t.root / "usr/share/hello/greeting.txt") == "Hello from hello-1.0\n");

  auto db = t.vdb();
  REQUIRE(db.entries().size() == 1);
  const auto& e = db.entries()[0];
  CHECK(e.reason == "target");
  CHECK(e.chost == "x86_64-pc-linux-gnu");
  CHECK(e.build_env.at("CFLAGS") == "-O2 -pipe");
  CHECK(db.world() == std::vector<std::string>{"app-misc/hello"});
  CHECK(db.owners("/usr/bin/hi").size() == 1);
  bool has_sym = false;
  for (const auto& c : e.contents) has_sym |= c.kind == ContentKind::sym && c.path == "/usr/bin/hi";
  CHECK(has_sym);

  t.unmerge_all("app-misc", "hello");
  CHECK(ts::snapshot(t.root).empty());
}

TEST_CASE("merge under an offset prefix") {
  Target t("/opt/gentoo");
  t.merge("app-misc/hello");
  CHECK(fs::is_regular_file(t.root / "opt/gentoo/usr/bin/hello"));
  CHECK(fs::is_directory(t.root / "opt/gentoo/var/db/pm/app-misc/hello-1.0"));
  auto db = t.vdb();
  CHECK(db.owners("/opt/gentoo/usr/bin/hello").size() == 1);
  t.unmerge_all("app-misc", "hello");
  CHECK(fs::is_empty(t.root / "opt/gentoo"));
}

TEST_CASE("collision-protect refuses files owned elsewhere") {
  Target t;
  t.merge("app-misc/collide-a");
  const auto before = ts::snapshot(t.root);
  try {
    t.merge("app-misc/collide-b");
    FAIL("expected a collision");
  } catch (const CollisionError& e) {
    CHECK(e.path() == "/usr/share/collide/common.txt");
    CHECK(e.owner() == "app-misc/collide-a-1.0");
  }
  CHECK(ts::describe_difference(before, ts::snapshot(t.root)) == "");
}

TEST_CASE("files nobody owns are overwritten") {
  Target t;
  fs::create_directories(t.root / "usr/bin");
  write_file_atomic(t.root / "usr/bin/hello", "stray\n");
  t.merge("app-misc/hello");
  CHECK(ts::slurp(t.root / "usr/bin/hello") != "stray\n");
}

TEST_CASE("splitdebug relocates debug files") {
  Target t;
  write_file_atomic(t.config_root / "etc/pm/package.env", "dev-lang/R debug-cflags.conf\n");
  fs::create_directories(t.config_root / "etc/pm/env");
  fs::copy_file(ts::fixtures() / "configs/debug-cflags.conf", t.config_root / "etc/pm/env/debug-cflags.conf");
  t.config = load_config(t.config_root, t.root, "");
  t.merge("dev-lang/R");
  CHECK(fs::exists(t.root / "usr/lib/R/lib/libR.so"));
  CHECK_FALSE(fs::exists(t.root / "usr/lib/R/lib/libR.so.debug"));
  CHECK(ts::slurp(t.root / "usr/lib/debug/usr/lib/R/lib/libR.so.debug").find("-O2 -ggdb -pipe") != std::string::npos);
  auto db = t.vdb();
  CHECK(db.owners("/usr/lib/debug/usr/lib/R/lib/libR.so.debug").size() == 1);
}

TEST_CASE("unmerge keeps modified and shared files") {
  Target t;
  t.merge("app-misc/hello");
  write_file_atomic(t.root / "usr/share/hello/greeting.txt", "mine\n");
  t.unmerge_all("app-misc", "hello");
  CHECK(ts::slurp(t.root / "usr/share/hello/greeting.txt") == "mine\n");
  CHECK_FALSE(fs::exists(t.root / "usr/bin/hello"));
  CHECK_FALSE(fs::exists(t.root / "usr/bin/hi"));
  CHECK(t.vdb().entries().empty());
  CHECK(t.vdb().world().empty());
}

TEST_CASE("same-slot replacement drops obsolete files") {
  Target t;
  t.merge("python:2.7");
  CHECK(fs::exists(t.root / "usr/lib/python2.7/site.py"));
  t.repos = PackageTree::load({{"upgrade", ts::overlay("upgrade"), 10}, {"main", ts::tree(), 0}});
  t.merge("python:2.7");
  CHECK_FALSE(fs::exists(t.root / "usr/lib/python2.7/site.py"));
  CHECK(fs::exists(t.root / "usr/lib/python2.7/NEWS"));
  auto db = t.vdb();
  CHECK(db.find_package("dev-lang", "python").size() == 1);
  CHECK(db.world() == std::vector<std::string>{"dev-lang/python:2.7"});
}

TEST_CASE("build area must not live inside the target") {
  TempDir root;
  auto config = empty_config(root.path(), "");
  setenv("TMPDIR", root.path().c_str(), 1);
  {
    BuildArea area;
    CHECK_THROWS_AS(make_context(config, ts::recipe("app-misc/x-1"), area), BuildError);
  }
  unsetenv("TMPDIR");
}

TEST_CASE("world atoms") {
  auto py = ts::recipe("dev-lang/python-2.7.12", "SLOT=\"2.7\"\n");
  CHECK(world_atom_for(py, {parse_atom("python:2.7")}) == "dev-lang/python:2.7");
  CHECK(world_atom_for(py, {parse_atom("dev-lang/python")}) == "dev-lang/python");
}

TEST_CASE("recorded digests and machines match what was merged") {
  Target t("/micfs", "k1om");
  t.merge("python:2.7");
  const auto db = t.vdb();
  REQUIRE(db.entries().size() == 5);
  std::size_t artifacts = 0;
  for (const auto& e : db.entries()) {
    CHECK(e.chost == "x86_64-k1om-linux-gnu");
    for (const auto& c : e.contents) {
      if (c.kind != ContentKind::obj) continue;
      const auto file = t.root / c.path.substr(1);
      CHECK(sha256_file(file) == c.digest);
      if (ts::slurp(file).starts_with(toy_magic)) {
        ++artifacts;
        CHECK(inspect_machine(file) == e.chost);
      }
    }
  }
  CHECK(artifacts == 5);
}
