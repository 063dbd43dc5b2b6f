#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace voxdec {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2 };

/// Entry point shared by the voxdec executable and the tests.
/// args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses "DxHxW".
bool parse_grid(const std::string& text, std::size_t& d, std::size_t& h, std::size_t& w);

}  // namespace voxdec
