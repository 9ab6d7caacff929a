#pragma once

#include <string>
#include <vector>

namespace tsarank::cli {

/// Runs one command line (argv[0] excluded). Returns the process exit code:
/// 0 on success, 2 for usage or configuration problems, 1 otherwise. Failures
/// print one JSON error record to stderr and append it to the command log.
int run(const std::vector<std::string>& args);

}  // namespace tsarank::cli
