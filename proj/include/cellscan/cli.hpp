#pragma once

#include <string>
#include <vector>

namespace cellscan {

// Full command-line surface (preprocess / train / eval / predict / report).
// args excludes the program name. Returns 0 on success, 1 on usage errors,
// 2 on runtime errors.
int run_cli(std::vector<std::string> args);

} // namespace cellscan
