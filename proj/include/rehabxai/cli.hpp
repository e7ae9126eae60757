#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rehabxai {

// Exit codes: 0 success, 1 validation, 2 runtime.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Subcommands: generate, train, evaluate, explain, serve, analyze. Global
// flags: --seed, --json, --store. JSON goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rehabxai
