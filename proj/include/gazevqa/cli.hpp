#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gazevqa {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Runs one CLI invocation (args exclude the program name). Exit codes:
// 0 success, 2 validation/configuration/format error, 3 runtime or training
// failure. Every state-changing command writes a run manifest.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace gazevqa
