#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prefixpm {

// One hunk line: ' ', '-' or '+' followed by the text including its line
// terminator (absent when marked "\ No newline at end of file").
struct HunkLine {
  char tag = ' ';
  std::string text;
};

struct Hunk {
  std::size_t old_start = 0;
  std::size_t old_count = 0;
  std::size_t new_start = 0;
  std::size_t new_count = 0;
  std::vector<HunkLine> lines;
};

struct FilePatch {
  std::string old_path;  // as written, "/dev/null" for creations
  std::string new_path;
  std::optional<unsigned> old_mode;
  std::optional<unsigned> new_mode;
  std::vector<Hunk> hunks;

  bool creates() const { return old_path == "/dev/null"; }
  bool deletes() const { return new_path == "/dev/null"; }
};

// Accepts plain and git-style unified diffs. Text before the first "---"
// header of each file is ignored apart from git mode lines.
std::vector<FilePatch> parse_patch(std::string_view text, std::string_view origin = "patch");

struct PatchOptions {
  int strip = 1;
  bool reverse = false;
};

// Applies every file of the patch under workdir or none of them. Hunks must
// match their context exactly; the position may drift from the line number
// in the header. Returns the touched paths relative to workdir.
std::vector<std::string> apply_patch(std::string_view diff, const std::filesystem::path& workdir,
                                     const PatchOptions& options = {});

}  // namespace prefixpm
