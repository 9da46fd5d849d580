#pragma once

#include <iosfwd>

namespace dispfl {

/// Entry point of the `dispfl` tool. Returns 0 on success, 2 on bad usage,
/// 1 on any other failure (message on `err`).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dispfl
