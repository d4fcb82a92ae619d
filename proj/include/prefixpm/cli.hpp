#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace prefixpm::cli {

// Exit codes: 0 success, 2 usage/parse/configuration, 3 resolution,
// 4 build, 5 merge collision.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err);

}  // namespace prefixpm::cli
