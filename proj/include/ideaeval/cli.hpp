#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ideaeval::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitProvider = 3;
inline constexpr int kExitStageAbort = 4;

/// `args` excludes the program name. Results go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace ideaeval::cli
