#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace zoomiq::cli {

// Exit codes: 0 success, 1 usage/config, 2 data/io, 3 numeric failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

} // namespace zoomiq::cli
