#include <prefixpm/atoms.hpp>

#include <prefixpm/errors.hpp>

#include <algorithm>
#include <cctype>
#include <limits>
#include <tuple>

namespace prefixpm {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }

struct SuffixName {
  std::string_view text;
  SuffixKind kind;
};

// Longest names first so "pre" is not read as "p".
constexpr SuffixName suffix_names[] = {
    {"alpha", SuffixKind::alpha}, {"beta", SuffixKind::beta}, {"pre", SuffixKind::pre},
    {"rc", SuffixKind::rc},       {"p", SuffixKind::p},
};

std::string_view suffix_text(SuffixKind kind) {
  for (const auto& s : suffix_names)
    if (s.kind == kind) return s.text;
  return "?";
}

// Rank of the suffix slot, with "no suffix" between rc and p.
int suffix_rank(const std::optional<VersionSuffix>& s) {
  if (!s) return 4;
  switch (s->kind) {
    case SuffixKind::alpha: return 0;
    case SuffixKind::beta: return 1;
    case SuffixKind::pre: return 2;
    case SuffixKind::rc: return 3;
    case SuffixKind::p: return 5;
  }
  return 4;
}

class VersionParser {
 public:
  explicit VersionParser(std::string_view text) : text_(text) {}

  std::optional<Version> parse(std::string* error) {
    error_ = error;
    Version v;
    if (text_.empty()) return fail("empty version");
    for (;;) {
      std::uint64_t n = 0;
      if (!number(n)) return std::nullopt;
      v.components.push_back(n);
      if (peek() != '.') break;
      ++pos_;
    }
    if (is_lower(peek())) v.letter = text_[pos_++];
    if (peek() == '_') {
      ++pos_;
      VersionSuffix s;
      bool found = false;
      for (const auto& name : suffix_names) {
        if (text_.substr(pos_).starts_with(name.text)) {
          s.kind = name.kind;
          pos_ += name.text.size();
          found = true;
          break;
        }
      }
      if (!found) return fail("unknown suffix");
      if (is_digit(peek()) && !number(s.number)) return std::nullopt;
      v.suffix = s;
    }
    if (peek() == '-') {
      ++pos_;
      if (peek() != 'r') return fail("expected -r<N> revision");
      ++pos_;
      if (!number(v.revision)) return std::nullopt;
    }
    if (pos_ != text_.size()) return fail("trailing characters");
    return v;
  }

 private:
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  bool number(std::uint64_t& out) {
    if (!is_digit(peek())) {
      fail("expected digit");
      return false;
    }
    std::uint64_t n = 0;
    while (is_digit(peek())) {
      auto d = static_cast<std::uint64_t>(text_[pos_] - '0');
      if (n > (std::numeric_limits<std::uint64_t>::max() - d) / 10) {
        fail("number too large");
        return false;
      }
      n = n * 10 + d;
      ++pos_;
    }
    out = n;
    return true;
  }

  std::optional<Version> fail(const char* what) {
    if (error_) {
      *error_ = "invalid version '" + std::string(text_) + "': " + what + " at index " +
                std::to_string(pos_);
    }
    return std::nullopt;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::string* error_ = nullptr;
};

std::string_view op_text(AtomOp op) {
  switch (op) {
    case AtomOp::none: return "";
    case AtomOp::eq: return "=";
    case AtomOp::ge: return ">=";
    case AtomOp::le: return "<=";
    case AtomOp::gt: return ">";
    case AtomOp::lt: return "<";
    case AtomOp::tilde: return "~";
  }
  return "";
}

[[noreturn]] void atom_error(std::string_view text, const std::string& what) {
  throw ParseError("invalid atom '" + std::string(text) + "': " + what);
}

// Splits "name-version" at the first hyphen whose tail is a valid version
// and whose head is a valid package name.
std::optional<std::pair<std::string_view, Version>> split_name_version(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '-' || i == 0) continue;
    auto head = s.substr(0, i);
    auto tail = s.substr(i + 1);
    if (!valid_package_name(head)) continue;
    if (auto v = try_parse_version(tail)) return std::make_pair(head, *v);
  }
  return std::nullopt;
}

}  // namespace

std::strong_ordering operator<=>(const Version& a, const Version& b) {
  const auto n = std::min(a.components.size(), b.components.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (auto c = a.components[i] <=> b.components[i]; c != 0) return c;
  }
  if (auto c = a.components.size() <=> b.components.size(); c != 0) return c;
  // Absent letter sorts first.
  int la = a.letter ? *a.letter : 0;
  int lb = b.letter ? *b.letter : 0;
  if (auto c = la <=> lb; c != 0) return c;
  if (auto c = suffix_rank(a.suffix) <=> suffix_rank(b.suffix); c != 0) return c;
  std::uint64_t sa = a.suffix ? a.suffix->number : 0;
  std::uint64_t sb = b.suffix ? b.suffix->number : 0;
  if (auto c = sa <=> sb; c != 0) return c;
  return a.revision <=> b.revision;
}

std::strong_ordering compare_versions(const Version& a, const Version& b) { return a <=> b; }

std::string Version::str() const {
  std::string out;
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (i) out.push_back('.');
    out += std::to_string(components[i]);
  }
  if (letter) out.push_back(*letter);
  if (suffix) {
    out.push_back('_');
    out += suffix_text(suffix->kind);
    if (suffix->number) out += std::to_string(suffix->number);
  }
  if (revision) out += "-r" + std::to_string(revision);
  return out;
}

Version Version::without_revision() const {
  Version v = *this;
  v.revision = 0;
  return v;
}

std::optional<Version> try_parse_version(std::string_view text) {
  return VersionParser(text).parse(nullptr);
}

Version parse_version(std::string_view text) {
  std::string error;
  auto v = VersionParser(text).parse(&error);
  if (!v) throw ParseError(error);
  return *v;
}

bool valid_category(std::string_view s) {
  if (s.empty() || s.front() == '-') return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return is_lower(c) || is_digit(c) || c == '-'; });
}

bool valid_package_name(std::string_view s) {
  if (s.empty() || s.front() == '-') return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '+' || c == '-';
  });
}

bool valid_flag(std::string_view s) {
  if (s.empty() || !std::isalnum(static_cast<unsigned char>(s.front()))) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '+' || c == '-' ||
           c == '@';
  });
}

Atom parse_atom(std::string_view text) {
  const std::string_view original = text;
  if (text.empty()) atom_error(original, "empty");
  Atom atom;

  if (text.starts_with(">=")) {
    atom.op = AtomOp::ge;
  } else if (text.starts_with("<=")) {
    atom.op = AtomOp::le;
  } else if (text.starts_with("=")) {
    atom.op = AtomOp::eq;
  } else if (text.starts_with(">")) {
    atom.op = AtomOp::gt;
  } else if (text.starts_with("<")) {
    atom.op = AtomOp::lt;
  } else if (text.starts_with("~")) {
    atom.op = AtomOp::tilde;
  }
  text.remove_prefix(op_text(atom.op).size());

  if (text.ends_with(']')) {
    auto open = text.rfind('[');
    if (open == std::string_view::npos) atom_error(original, "unbalanced ']'");
    auto body = text.substr(open + 1, text.size() - open - 2);
    if (body.empty()) atom_error(original, "empty USE dependency list");
    std::size_t start = 0;
    for (;;) {
      auto comma = body.find(',', start);
      auto item = body.substr(start, comma == std::string_view::npos ? body.npos : comma - start);
      UseDep dep;
      if (item.starts_with('-')) {
        dep.enabled = false;
        item.remove_prefix(1);
      }
      if (!valid_flag(item)) atom_error(original, "invalid USE flag '" + std::string(item) + "'");
      dep.flag = std::string(item);
      atom.use_deps.push_back(std::move(dep));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    text = text.substr(0, open);
  }

  if (auto colon = text.find(':'); colon != std::string_view::npos) {
    auto slot = text.substr(colon + 1);
    if (slot.empty()) atom_error(original, "empty slot");
    for (char c : slot) {
      if (std::isspace(static_cast<unsigned char>(c)) || c == ':' || c == '[' || c == ']' ||
          c == '/')
        atom_error(original, "illegal character in slot");
    }
    atom.slot = std::string(slot);
    text = text.substr(0, colon);
  }

  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    auto category = text.substr(0, slash);
    if (!valid_category(category))
      atom_error(original, "invalid category '" + std::string(category) + "'");
    atom.category = std::string(category);
    text = text.substr(slash + 1);
  }
  if (text.find('/') != std::string_view::npos) atom_error(original, "too many '/'");

  auto split = split_name_version(text);
  if (atom.op != AtomOp::none) {
    if (!split) atom_error(original, "operator without version");
    atom.name = std::string(split->first);
    atom.version = split->second;
  } else {
    if (split) atom_error(original, "version requires an operator");
    if (!valid_package_name(text)) atom_error(original, "illegal characters in name");
    atom.name = std::string(text);
  }
  return atom;
}

std::string Atom::package() const {
  return category ? *category + "/" + name : name;
}

std::string Atom::str() const {
  std::string out(op_text(op));
  out += package();
  if (version) out += "-" + version->str();
  if (slot) out += ":" + *slot;
  if (!use_deps.empty()) {
    out.push_back('[');
    for (std::size_t i = 0; i < use_deps.size(); ++i) {
      if (i) out.push_back(',');
      if (!use_deps[i].enabled) out.push_back('-');
      out += use_deps[i].flag;
    }
    out.push_back(']');
  }
  return out;
}

std::string PackageId::str() const { return category + "/" + name + "-" + version.str(); }
std::string PackageId::package() const { return category + "/" + name; }
std::string PackageId::slotted() const { return str() + ":" + slot; }

bool id_less(const PackageId& a, const PackageId& b) {
  if (a.category != b.category) return a.category < b.category;
  if (a.name != b.name) return a.name < b.name;
  return a.version < b.version;
}

bool atom_matches(const Atom& atom, const PackageId& candidate, const FlagSet& candidate_use) {
  if (atom.category && *atom.category != candidate.category) return false;
  if (atom.name != candidate.name) return false;
  if (atom.version) {
    const auto& want = *atom.version;
    const auto& have = candidate.version;
    bool ok = false;
    switch (atom.op) {
      case AtomOp::none: ok = true; break;
      case AtomOp::eq: ok = have == want; break;
      case AtomOp::ge: ok = have >= want; break;
      case AtomOp::le: ok = have <= want; break;
      case AtomOp::gt: ok = have > want; break;
      case AtomOp::lt: ok = have < want; break;
      case AtomOp::tilde: ok = have.without_revision() == want.without_revision(); break;
    }
    if (!ok) return false;
  }
  if (atom.slot && *atom.slot != candidate.slot) return false;
  for (const auto& dep : atom.use_deps) {
    if (candidate_use.contains(dep.flag) != dep.enabled) return false;
  }
  return true;
}

}  // namespace prefixpm
