#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace xlvin::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitRuntimeError = 2;

// Environment variable naming the root that relative output directories are
// placed under.
inline constexpr const char* kOutputRootVar = "XLVIN_OUTPUT_ROOT";

// args excludes the program name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// output_dir resolved against XLVIN_OUTPUT_ROOT when it is relative.
std::string resolve_output_dir(const std::string& output_dir);

} // namespace xlvin::cli
