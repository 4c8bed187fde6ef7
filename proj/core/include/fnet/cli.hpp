#pragma once

#include <string>
#include <vector>

namespace fnet::cli {

/// Entry point of the `fnet` tool. Exit codes: 0 success, 1 usage error,
/// 2 runtime failure (bad file, diverged training, ...).
int run(int argc, const char* const* argv);

/// In-process variant for tests: args exclude the program name.
int run(const std::vector<std::string>& args);

}  // namespace fnet::cli
