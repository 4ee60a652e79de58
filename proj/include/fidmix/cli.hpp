#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fidmix {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInference = 3;
inline constexpr int kExitOracle = 4;

inline constexpr char kVersion[] = "0.1.0";

// Runs one command line (without the program name): fit, simulate, designs,
// oracle, generate or replay. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fidmix
