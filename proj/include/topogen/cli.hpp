#pragma once

#include <string>
#include <vector>

namespace topogen {

// Command line driver. Takes argv[1..argc) in natural order and returns the
// process exit code: 0 success, 1 usage, 2 runtime failure.
int run_cli(std::vector<std::string> args);

}  // namespace topogen
