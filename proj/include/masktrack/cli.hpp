#pragma once

#include <string>
#include <vector>

namespace masktrack::cli {

// Exit codes: 0 success, 2 usage error, 3 config/input error, 1 runtime failure.
int dispatch(int argc, char** argv);
int dispatch(const std::vector<std::string>& args);  // args without argv[0]

}  // namespace masktrack::cli
