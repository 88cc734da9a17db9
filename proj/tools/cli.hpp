#pragma once

#include <string>
#include <vector>

namespace csvar::cli {

// Runs one subcommand; returns the process exit code. args excludes argv[0].
int run(const std::vector<std::string>& args);

}  // namespace csvar::cli
