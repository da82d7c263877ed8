#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 data error.

#include <string>
#include <vector>

namespace opcode_sieve {

int run(int argc, const char* const* argv);

/// Same, for tests: `args` excludes the program name.
int run(const std::vector<std::string>& args);

} // namespace opcode_sieve
