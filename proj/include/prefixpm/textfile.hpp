#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prefixpm {

// Shell-flavoured line syntax shared by make.conf, env/*.conf,
// global-env.conf and recipe headers.
//
//   KEY=word            unquoted, ends at whitespace
//   KEY="text ${VAR}"   may span lines; backslash-newline is removed
//   KEY='text'          literal, no expansion
//   export KEY=...      "export" is accepted and ignored
//
// '#' at the start of a word outside quotes begins a comment.

// A value is a sequence of literal text and ${VAR} references; expansion
// concatenates them, so expanding an already-expanded value is a no-op.
struct ValuePiece {
  std::string text;
  bool is_reference = false;
};

struct Assignment {
  std::string key;
  std::vector<ValuePiece> value;
  std::size_t line = 0;
};

using VarLookup = std::function<std::optional<std::string>(std::string_view)>;

std::vector<Assignment> parse_assignments(std::string_view text, std::string_view origin);

// Undefined references expand to the empty string.
std::string expand(const std::vector<ValuePiece>& value, const VarLookup& lookup);
std::string expand_text(std::string_view text, const VarLookup& lookup);

// Literal value with no references, e.g. for rendering.
std::string literal_value(const std::vector<ValuePiece>& value);

// Splits a command line into words honouring quotes and expanding ${VAR}.
std::vector<std::string> split_command(std::string_view line, const VarLookup& lookup);

// Drops a trailing '#' comment that begins a word outside quotes.
std::string strip_comment(std::string_view line);

std::vector<std::string> split_words(std::string_view text);
std::string_view trim(std::string_view text);
std::string join(const std::vector<std::string>& items, std::string_view sep);

// Double-quoted rendering that parse_assignments reads back verbatim.
std::string quote_value(std::string_view value);

}  // namespace prefixpm
