#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace diffcap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one of train, sample, eval, inspect-schedule or gen-synth. `args`
/// excludes the program name. Every subcommand accepts --config <json>, whose
/// keys are the long flag names with '-' spelled '_'; flags given on the
/// command line take precedence. The effective configuration is written next
/// to the outputs so it can be passed back through --config.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace diffcap::cli
