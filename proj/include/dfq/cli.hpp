#pragma once

#include <string>
#include <vector>

namespace dfq::bench {

/// Command-line entry point (args exclude the program name).
/// Exit codes: 0 success, 2 usage/config error, 1 runtime failure.
int cli_main(const std::vector<std::string>& args);

}  // namespace dfq::bench
