#pragma once

#include <string>
#include <vector>

namespace somno::cli {

// Exit codes: 0 success, 1 usage error, 2 data or format error, 3 runtime
// failure. The binary's main() forwards argv here; tests call it in-process.
int run(const std::vector<std::string>& args);

}  // namespace somno::cli
