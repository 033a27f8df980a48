#pragma once

namespace amp::cli {

/// Dispatches one subcommand. Exit codes: 0 success, 1 usage error,
/// 2 data/checkpoint error, 3 invariant violation (including a failed
/// gradient check).
int run(int argc, const char* const* argv);

} // namespace amp::cli
