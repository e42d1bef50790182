#pragma once

#include <iosfwd>

namespace orbcorr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

/// Parses argv and runs one subcommand (plan, propagate, gen-dataset, train, simulate,
/// montecarlo). Progress goes to `out`, errors to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace orbcorr::cli
