#include <prefixpm/textfile.hpp>

#include <prefixpm/errors.hpp>

#include <cctype>

namespace prefixpm {

namespace {

bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r'; }
bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Cursor {
 public:
  Cursor(std::string_view text, std::string_view origin) : text_(text), origin_(origin) {}

  bool eof() const { return pos_ >= text_.size(); }
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }
  char get() {
    char c = text_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }
  std::size_t line() const { return line_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(std::string(origin_) + ":" + std::to_string(line_) + ": " + what);
  }

 private:
  std::string_view text_;
  std::string_view origin_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

void append_literal(std::vector<ValuePiece>& out, char c) {
  if (out.empty() || out.back().is_reference) out.push_back({});
  out.back().text.push_back(c);
}

// Reads "${NAME}" after the '$' has been seen. A '$' not followed by '{'
// stays literal.
void read_reference(Cursor& cur, std::vector<ValuePiece>& out) {
  if (cur.peek() != '{') {
    append_literal(out, '$');
    return;
  }
  cur.get();
  std::string name;
  while (!cur.eof() && cur.peek() != '}') {
    char c = cur.get();
    if (!is_name_char(c)) cur.fail("invalid character in variable reference");
    name.push_back(c);
  }
  if (cur.eof()) cur.fail("unterminated ${ reference");
  cur.get();
  if (name.empty() || !is_name_start(name.front())) cur.fail("empty variable reference");
  out.push_back({std::move(name), true});
}

// Reads one shell word (with adjacent quoted segments) into pieces.
// Returns false if no word was present.
bool read_word(Cursor& cur, std::vector<ValuePiece>& out, bool expand_refs) {
  bool any = false;
  while (!cur.eof()) {
    char c = cur.peek();
    if (is_blank(c) || c == '\n') break;
    any = true;
    if (c == '"') {
      cur.get();
      if (out.empty() || out.back().is_reference) out.push_back({});
      for (;;) {
        if (cur.eof()) cur.fail("unterminated double quote");
        char q = cur.get();
        if (q == '"') break;
        if (q == '\\') {
          if (cur.eof()) cur.fail("unterminated double quote");
          char e = cur.get();
          if (e == '\n') continue;
          if (e == '"' || e == '\\' || e == '$' || e == '`') {
            append_literal(out, e);
          } else {
            append_literal(out, '\\');
            append_literal(out, e);
          }
        } else if (q == '$' && expand_refs) {
          read_reference(cur, out);
        } else {
          append_literal(out, q);
        }
      }
    } else if (c == '\'') {
      cur.get();
      if (out.empty() || out.back().is_reference) out.push_back({});
      for (;;) {
        if (cur.eof()) cur.fail("unterminated single quote");
        char q = cur.get();
        if (q == '\'') break;
        append_literal(out, q);
      }
    } else if (c == '\\') {
      cur.get();
      if (cur.eof()) break;
      char e = cur.get();
      if (e != '\n') append_literal(out, e);
    } else if (c == '$' && expand_refs) {
      cur.get();
      read_reference(cur, out);
    } else {
      append_literal(out, cur.get());
    }
  }
  return any;
}

void skip_blanks(Cursor& cur) {
  while (!cur.eof() && is_blank(cur.peek())) cur.get();
}

void skip_to_eol(Cursor& cur) {
  while (!cur.eof() && cur.peek() != '\n') cur.get();
}

}  // namespace

std::vector<Assignment> parse_assignments(std::string_view text, std::string_view origin) {
  std::vector<Assignment> out;
  Cursor cur(text, origin);
  while (!cur.eof()) {
    skip_blanks(cur);
    if (cur.eof()) break;
    char c = cur.peek();
    if (c == '\n') {
      cur.get();
      continue;
    }
    if (c == '#') {
      skip_to_eol(cur);
      continue;
    }
    Assignment a;
    a.line = cur.line();
    std::string key;
    while (!cur.eof() && is_name_char(cur.peek())) key.push_back(cur.get());
    if (key == "export" && is_blank(cur.peek())) {
      skip_blanks(cur);
      key.clear();
      while (!cur.eof() && is_name_char(cur.peek())) key.push_back(cur.get());
    }
    if (key.empty() || !is_name_start(key.front())) cur.fail("expected KEY=value");
    if (cur.peek() != '=') cur.fail("expected '=' after " + key);
    cur.get();
    a.key = std::move(key);
    read_word(cur, a.value, true);
    skip_blanks(cur);
    if (!cur.eof() && cur.peek() == '#') skip_to_eol(cur);
    if (!cur.eof() && cur.peek() != '\n') cur.fail("unexpected text after value of " + a.key);
    out.push_back(std::move(a));
  }
  return out;
}

std::string expand(const std::vector<ValuePiece>& value, const VarLookup& lookup) {
  std::string out;
  for (const auto& piece : value) {
    if (!piece.is_reference) {
      out += piece.text;
    } else if (lookup) {
      if (auto v = lookup(piece.text)) out += *v;
    }
  }
  return out;
}

std::string expand_text(std::string_view text, const VarLookup& lookup) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '$' && i + 1 < text.size() && text[i + 1] == '{') {
      auto close = text.find('}', i + 2);
      if (close != std::string_view::npos) {
        auto name = text.substr(i + 2, close - i - 2);
        if (lookup) {
          if (auto v = lookup(name)) out += *v;
        }
        i = close;
        continue;
      }
    }
    out.push_back(text[i]);
  }
  return out;
}

std::string literal_value(const std::vector<ValuePiece>& value) {
  std::string out;
  for (const auto& piece : value) {
    if (piece.is_reference) {
      out += "${" + piece.text + "}";
    } else {
      out += piece.text;
    }
  }
  return out;
}

std::vector<std::string> split_command(std::string_view line, const VarLookup& lookup) {
  std::vector<std::string> words;
  Cursor cur(line, "command");
  for (;;) {
    skip_blanks(cur);
    if (cur.eof() || cur.peek() == '\n') break;
    if (cur.peek() == '#') break;
    std::vector<ValuePiece> pieces;
    read_word(cur, pieces, true);
    words.push_back(expand(pieces, lookup));
  }
  return words;
}

std::string strip_comment(std::string_view line) {
  char quote = 0;
  bool word_start = true;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quote) {
      if (c == '\\' && quote == '"') {
        ++i;
      } else if (c == quote) {
        quote = 0;
      }
      word_start = false;
      continue;
    }
    if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '\\') {
      ++i;
    } else if (c == '#' && word_start) {
      return std::string(line.substr(0, i));
    }
    word_start = is_blank(c);
  }
  return std::string(line);
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::string_view trim(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front())))
    text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
    text.remove_suffix(1);
  return text;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string quote_value(std::string_view value) {
  std::string out = "\"";
  for (char c : value) {
    if (c == '"' || c == '\\' || c == '$' || c == '`') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace prefixpm
