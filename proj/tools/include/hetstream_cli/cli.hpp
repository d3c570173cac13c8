#pragma once

#include <ostream>

namespace hetstream::cli {

enum ExitCode : int { ok = 0, config_error = 2, runtime_error = 3, protocol_error = 4 };

// Entry point of the hetstream tool with injectable streams.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hetstream::cli
