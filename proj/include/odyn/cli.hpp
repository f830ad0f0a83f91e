// Command-line entry point, shared by the tool binary and the in-process
// tests. Subcommands: generate, fit, select, evaluate.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

#pragma once

#include <string>
#include <vector>

namespace odyn::cli {

int run(const std::vector<std::string>& args);

}  // namespace odyn::cli
