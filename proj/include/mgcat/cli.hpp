#pragma once

#include <string>
#include <vector>

namespace mgcat::cli {

/// Exit codes: 0 success, 1 validation or usage error, 2 runtime error.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace mgcat::cli
