#include <prefixpm/patch.hpp>

#include <prefixpm/errors.hpp>
#include <prefixpm/fsutil.hpp>

#include <charconv>
#include <map>

namespace prefixpm {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto end = nl == std::string_view::npos ? text.size() : nl + 1;
    out.push_back(text.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

std::string_view chomp(std::string_view line) {
  if (line.ends_with('\n')) line.remove_suffix(1);
  if (line.ends_with('\r')) line.remove_suffix(1);
  return line;
}

// "--- a/path\t2017-01-01 ..." -> "a/path"
std::string header_path(std::string_view line) {
  line = chomp(line.substr(4));
  if (auto tab = line.find('\t'); tab != std::string_view::npos) line = line.substr(0, tab);
  return std::string(line);
}

bool parse_number(std::string_view& s, std::size_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || p == s.data()) return false;
  s.remove_prefix(static_cast<std::size_t>(p - s.data()));
  return true;
}

bool parse_range(std::string_view& s, std::size_t& start, std::size_t& count) {
  if (!parse_number(s, start)) return false;
  count = 1;
  if (s.starts_with(',')) {
    s.remove_prefix(1);
    if (!parse_number(s, count)) return false;
  }
  return true;
}

unsigned parse_mode(std::string_view text) {
  unsigned mode = 0;
  auto t = chomp(text);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), mode, 8);
  if (ec != std::errc{} || p != t.data() + t.size()) throw ParseError("bad file mode '" + std::string(t) + "'");
  return mode;
}

struct GitHeader {
  std::string old_path;
  std::string new_path;
  std::optional<unsigned> old_mode;
  std::optional<unsigned> new_mode;
  bool new_file = false;
  bool deleted_file = false;
  bool used = false;
};

GitHeader parse_git_line(std::string_view line) {
  GitHeader g;
  auto rest = chomp(line.substr(std::string_view("diff --git ").size()));
  if (auto b = rest.find(" b/"); b != std::string_view::npos) {
    g.old_path = std::string(rest.substr(0, b));
    g.new_path = std::string(rest.substr(b + 1));
  }
  return g;
}

std::optional<FilePatch> mode_only_patch(const GitHeader& g) {
  if (g.used || g.old_path.empty()) return std::nullopt;
  if (!g.new_mode && !g.new_file && !g.deleted_file) return std::nullopt;
  FilePatch fp;
  fp.old_path = g.new_file ? "/dev/null" : g.old_path;
  fp.new_path = g.deleted_file ? "/dev/null" : g.new_path;
  fp.old_mode = g.old_mode;
  fp.new_mode = g.new_mode;
  return fp;
}

}  // namespace

std::vector<FilePatch> parse_patch(std::string_view text, std::string_view origin) {
  const auto lines = split_lines(text);
  std::vector<FilePatch> out;
  std::optional<GitHeader> git;
  auto fail = [&](std::size_t index, const std::string& what) {
    throw ParseError(std::string(origin) + ":" + std::to_string(index + 1) + ": " + what);
  };
  auto flush_git = [&] {
    if (git) {
      if (auto fp = mode_only_patch(*git)) out.push_back(std::move(*fp));
    }
    git.reset();
  };

  std::size_t i = 0;
  while (i < lines.size()) {
    auto line = lines[i];
    if (line.starts_with("diff --git ")) {
      flush_git();
      git = parse_git_line(line);
      ++i;
      continue;
    }
    if (git) {
      if (line.starts_with("old mode ")) git->old_mode = parse_mode(line.substr(9));
      else if (line.starts_with("new mode ")) git->new_mode = parse_mode(line.substr(9));
      else if (line.starts_with("new file mode ")) {
        git->new_file = true;
        git->new_mode = parse_mode(line.substr(14));
      } else if (line.starts_with("deleted file mode ")) {
        git->deleted_file = true;
        git->old_mode = parse_mode(line.substr(18));
      }
    }
    if (!(line.starts_with("--- ") && i + 1 < lines.size() && lines[i + 1].starts_with("+++ "))) {
      ++i;
      continue;
    }

    FilePatch fp;
    fp.old_path = header_path(line);
    fp.new_path = header_path(lines[i + 1]);
    if (git) {
      fp.old_mode = git->old_mode;
      fp.new_mode = git->new_mode;
      git->used = true;
    }
    i += 2;
    while (i < lines.size() && lines[i].starts_with("@@ ")) {
      Hunk h;
      std::string_view s = chomp(lines[i]).substr(3);
      if (!s.starts_with('-')) fail(i, "malformed hunk header");
      s.remove_prefix(1);
      if (!parse_range(s, h.old_start, h.old_count)) fail(i, "malformed hunk header");
      if (!s.starts_with(" +")) fail(i, "malformed hunk header");
      s.remove_prefix(2);
      if (!parse_range(s, h.new_start, h.new_count) || !s.starts_with(" @@"))
        fail(i, "malformed hunk header");
      ++i;
      std::size_t old_seen = 0;
      std::size_t new_seen = 0;
      while (old_seen < h.old_count || new_seen < h.new_count) {
        if (i >= lines.size()) fail(i, "hunk truncated");
        auto body = lines[i];
        if (body.starts_with('\\')) {
          if (h.lines.empty() || !h.lines.back().text.ends_with('\n')) fail(i, "misplaced marker");
          h.lines.back().text.pop_back();
          ++i;
          continue;
        }
        char tag = body.empty() || body == "\n" ? ' ' : body[0];
        std::string content = body.size() <= 1 ? std::string(body == "\n" ? "\n" : "")
                                               : std::string(body.substr(1));
        if (tag == ' ') {
          ++old_seen;
          ++new_seen;
        } else if (tag == '-') {
          ++old_seen;
        } else if (tag == '+') {
          ++new_seen;
        } else {
          fail(i, "unexpected line in hunk");
        }
        if (old_seen > h.old_count || new_seen > h.new_count) fail(i, "hunk longer than header");
        h.lines.push_back({tag, std::move(content)});
        ++i;
      }
      if (i < lines.size() && lines[i].starts_with('\\')) {
        if (h.lines.empty() || !h.lines.back().text.ends_with('\n')) fail(i, "misplaced marker");
        h.lines.back().text.pop_back();
        ++i;
      }
      fp.hunks.push_back(std::move(h));
    }
    if (fp.hunks.empty() && !fp.creates() && !fp.deletes()) fail(i, "file patch without hunks");
    out.push_back(std::move(fp));
  }
  flush_git();
  if (out.empty()) throw ParseError(std::string(origin) + ": no file patches found");
  return out;
}

namespace {

struct FileState {
  bool exists = false;
  std::string content;
  std::optional<unsigned> mode;
};

struct Failure {
  std::string file;
  std::size_t hunk;
  std::string what;
};

std::string strip_path(const std::string& path, int strip) {
  std::string_view p = path;
  for (int n = 0; n < strip; ++n) {
    auto slash = p.find('/');
    if (slash == std::string_view::npos) throw ParseError("cannot strip " + std::to_string(strip) +
                                                           " components from '" + path + "'");
    p.remove_prefix(slash + 1);
    while (p.starts_with('/')) p.remove_prefix(1);
  }
  fs::path rel = fs::path(p).lexically_normal();
  if (p.empty() || rel.is_absolute() || *rel.begin() == "..")
    throw ParseError("patch path '" + path + "' leaves the work directory");
  return rel.generic_string();
}

FilePatch reversed(const FilePatch& fp) {
  FilePatch r;
  r.old_path = fp.new_path;
  r.new_path = fp.old_path;
  r.old_mode = fp.new_mode;
  r.new_mode = fp.old_mode;
  for (const auto& h : fp.hunks) {
    Hunk rh{h.new_start, h.new_count, h.old_start, h.old_count, {}};
    for (const auto& l : h.lines) {
      char tag = l.tag == '+' ? '-' : l.tag == '-' ? '+' : ' ';
      rh.lines.push_back({tag, l.text});
    }
    r.hunks.push_back(std::move(rh));
  }
  return r;
}

std::vector<std::string> to_lines(std::string_view content) {
  std::vector<std::string> out;
  for (auto l : split_lines(content)) out.emplace_back(l);
  return out;
}

// Returns the failing 1-based hunk index, or 0 on success.
std::size_t apply_hunks(const FilePatch& fp, std::string& content) {
  auto lines = to_lines(content);
  std::size_t min_pos = 0;
  long offset = 0;
  for (std::size_t k = 0; k < fp.hunks.size(); ++k) {
    const auto& h = fp.hunks[k];
    std::vector<std::string> old_lines;
    std::vector<std::string> new_lines;
    for (const auto& l : h.lines) {
      if (l.tag != '+') old_lines.push_back(l.text);
      if (l.tag != '-') new_lines.push_back(l.text);
    }
    const long nominal = static_cast<long>(h.old_count == 0 ? h.old_start : h.old_start - 1);
    long expected = std::clamp(nominal + offset, static_cast<long>(min_pos),
                               static_cast<long>(lines.size()));
    auto matches = [&](long p) {
      if (p < static_cast<long>(min_pos) || p + static_cast<long>(old_lines.size()) >
                                               static_cast<long>(lines.size()))
        return false;
      return std::equal(old_lines.begin(), old_lines.end(), lines.begin() + p);
    };
    std::optional<long> found;
    for (long d = 0; !found && d <= static_cast<long>(lines.size()); ++d) {
      if (matches(expected - d)) found = expected - d;
      else if (d > 0 && matches(expected + d)) found = expected + d;
    }
    if (!found) return k + 1;
    lines.erase(lines.begin() + *found, lines.begin() + *found + static_cast<long>(old_lines.size()));
    lines.insert(lines.begin() + *found, new_lines.begin(), new_lines.end());
    min_pos = static_cast<std::size_t>(*found) + new_lines.size();
    offset = *found - nominal + static_cast<long>(new_lines.size()) - static_cast<long>(old_lines.size());
  }
  content.clear();
  for (const auto& l : lines) content += l;
  return 0;
}

FileState read_state(const fs::path& path) {
  FileState s;
  std::error_code ec;
  if (fs::is_regular_file(path, ec)) {
    s.exists = true;
    s.content = read_file(path);
    s.mode = static_cast<unsigned>(fs::status(path).permissions()) & 07777u;
  }
  return s;
}

// Computes every file's new state in memory; nothing is written.
std::optional<Failure> compute(const std::vector<FilePatch>& patches, const fs::path& workdir,
                               int strip, std::map<std::string, FileState>& states,
                               std::vector<std::string>& order) {
  for (const auto& fp : patches) {
    const auto rel = strip_path(fp.deletes() ? fp.old_path : fp.new_path, strip);
    if (!states.contains(rel)) {
      states[rel] = read_state(workdir / rel);
      order.push_back(rel);
    }
    auto& st = states[rel];
    if (fp.creates() && st.exists) return Failure{rel, 1, "file to be created already exists"};
    if (!fp.creates() && !st.exists) return Failure{rel, 1, "file to be patched does not exist"};
    std::string content = fp.creates() ? std::string{} : st.content;
    if (auto bad = apply_hunks(fp, content)) return Failure{rel, bad, "context mismatch"};
    if (fp.deletes()) {
      if (!content.empty()) return Failure{rel, fp.hunks.size(), "file to be deleted has extra content"};
      st.exists = false;
      st.content.clear();
      continue;
    }
    st.exists = true;
    st.content = std::move(content);
    if (fp.new_mode) st.mode = *fp.new_mode & 07777u;
    else if (fp.creates()) st.mode.reset();
  }
  return std::nullopt;
}

}  // namespace

std::vector<std::string> apply_patch(std::string_view diff, const fs::path& workdir,
                                     const PatchOptions& options) {
  auto patches = parse_patch(diff);
  auto inverse = patches;
  for (auto& fp : inverse) fp = reversed(fp);
  if (options.reverse) std::swap(patches, inverse);

  std::map<std::string, FileState> states;
  std::vector<std::string> order;
  if (auto failure = compute(patches, workdir, options.strip, states, order)) {
    std::map<std::string, FileState> probe;
    std::vector<std::string> probe_order;
    // Reverse application runs over the files in the opposite order.
    std::vector<FilePatch> undo(inverse.rbegin(), inverse.rend());
    if (!compute(undo, workdir, options.strip, probe, probe_order))
      throw PatchAlreadyAppliedError("patch appears to be applied already (" + failure->file + ")");
    throw PatchError(failure->file, failure->hunk,
                     "hunk #" + std::to_string(failure->hunk) + " failed for " + failure->file +
                         ": " + failure->what);
  }

  for (const auto& rel : order) {
    const auto& st = states[rel];
    const auto path = workdir / rel;
    std::error_code ec;
    if (!st.exists) {
      if (fs::exists(path, ec)) {
        fs::remove(path);
        prune_empty_dirs(path.parent_path(), workdir);
      }
      continue;
    }
    write_file_atomic(path, st.content);
    if (st.mode) fs::permissions(path, static_cast<fs::perms>(*st.mode), fs::perm_options::replace);
  }
  return order;
}

}  // namespace prefixpm
