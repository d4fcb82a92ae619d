#include <prefixpm/depexpr.hpp>

#include <prefixpm/errors.hpp>
#include <prefixpm/textfile.hpp>

namespace prefixpm {

namespace {

class DepParser {
 public:
  explicit DepParser(std::string_view text) : text_(text), tokens_(split_words(text)) {}

  DepNode parse() {
    DepNode root;
    root.kind = DepNode::Kind::all_of;
    root.children = parse_sequence(false);
    return root;
  }

 private:
  std::vector<DepNode> parse_sequence(bool nested) {
    std::vector<DepNode> items;
    while (pos_ < tokens_.size()) {
      const std::string& tok = tokens_[pos_];
      if (tok == ")") {
        if (!nested) fail("unbalanced ')'");
        return items;
      }
      ++pos_;
      if (tok == "(") {
        DepNode group;
        group.kind = DepNode::Kind::all_of;
        group.children = parse_group_body();
        items.push_back(std::move(group));
      } else if (tok == "||") {
        expect_open("'||' must be followed by '('");
        DepNode group;
        group.kind = DepNode::Kind::any_of;
        group.children = parse_group_body();
        items.push_back(std::move(group));
      } else if (tok.size() > 1 && tok.back() == '?') {
        DepNode cond;
        cond.kind = DepNode::Kind::conditional;
        std::string_view flag(tok);
        flag.remove_suffix(1);
        if (flag.starts_with('!')) {
          cond.negated = true;
          flag.remove_prefix(1);
        }
        if (!valid_flag(flag)) fail("invalid flag in conditional '" + tok + "'");
        cond.flag = std::string(flag);
        expect_open("'" + tok + "' must be followed by '('");
        cond.children = parse_group_body();
        items.push_back(std::move(cond));
      } else {
        DepNode leaf;
        leaf.kind = DepNode::Kind::leaf;
        try {
          leaf.atom = parse_atom(tok);
        } catch (const ParseError& e) {
          fail(e.what());
        }
        items.push_back(std::move(leaf));
      }
    }
    if (nested) fail("unbalanced '('");
    return items;
  }

  std::vector<DepNode> parse_group_body() {
    auto children = parse_sequence(true);
    ++pos_;  // the closing ')'
    return children;
  }

  void expect_open(const std::string& what) {
    if (pos_ >= tokens_.size() || tokens_[pos_] != "(") fail(what);
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("invalid dependency expression '" + std::string(text_) + "': " + what);
  }

  std::string_view text_;
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
};

void render_into(const DepNode& node, std::vector<std::string>& out) {
  switch (node.kind) {
    case DepNode::Kind::leaf:
      out.push_back(node.atom.str());
      return;
    case DepNode::Kind::any_of:
      out.push_back("||");
      break;
    case DepNode::Kind::conditional:
      out.push_back((node.negated ? "!" : "") + node.flag + "?");
      break;
    case DepNode::Kind::all_of:
      break;
  }
  out.push_back("(");
  for (const auto& child : node.children) render_into(child, out);
  out.push_back(")");
}

void collect_flags(const DepNode& node, std::vector<std::string>& out) {
  if (node.kind == DepNode::Kind::conditional) {
    bool seen = false;
    for (const auto& f : out) seen = seen || f == node.flag;
    if (!seen) out.push_back(node.flag);
  }
  for (const auto& child : node.children) collect_flags(child, out);
}

void collect_atoms(const DepNode& node, std::vector<Atom>& out) {
  if (node.kind == DepNode::Kind::leaf) out.push_back(node.atom);
  for (const auto& child : node.children) collect_atoms(child, out);
}

}  // namespace

DepNode parse_dep_expr(std::string_view text) { return DepParser(text).parse(); }

std::string render_dep_expr(const DepNode& node) {
  std::vector<std::string> words;
  // The root all-of is implicit.
  if (node.kind == DepNode::Kind::all_of) {
    for (const auto& child : node.children) render_into(child, words);
  } else {
    render_into(node, words);
  }
  return join(words, " ");
}

std::vector<std::string> referenced_flags(const DepNode& node) {
  std::vector<std::string> out;
  collect_flags(node, out);
  return out;
}

std::vector<Atom> all_atoms(const DepNode& node) {
  std::vector<Atom> out;
  collect_atoms(node, out);
  return out;
}

}  // namespace prefixpm
