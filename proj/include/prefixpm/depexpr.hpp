#pragma once

#include <prefixpm/atoms.hpp>

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace prefixpm {

// Dependency expression tree:
//   all-of     ( a b c )           (the top level is an implicit all-of)
//   any-of     || ( a b )
//   condition  flag? ( ... )  or  !flag? ( ... )
//   leaf       an Atom
struct DepNode {
  enum class Kind { all_of, any_of, conditional, leaf };

  Kind kind = Kind::all_of;
  std::string flag;      // conditional only
  bool negated = false;  // conditional only: !flag?
  Atom atom;             // leaf only
  std::vector<DepNode> children;

  friend bool operator==(const DepNode&, const DepNode&) = default;
};

DepNode parse_dep_expr(std::string_view text);

// Canonical text, re-parses to an equal tree.
std::string render_dep_expr(const DepNode& node);

// Every flag used by a conditional, in first-seen order.
std::vector<std::string> referenced_flags(const DepNode& node);

// Every leaf atom regardless of conditionals.
std::vector<Atom> all_atoms(const DepNode& node);

}  // namespace prefixpm
