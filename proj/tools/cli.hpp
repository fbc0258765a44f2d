#pragma once

#include <string>
#include <vector>

namespace kfprop {

// Entry point shared by the kfprop binary and the CLI tests. args excludes
// the program name. Returns 0 on success, 1 when argument validation or a
// requested check fails, 2 on runtime errors.
int run_cli(const std::vector<std::string>& args);

}  // namespace kfprop
