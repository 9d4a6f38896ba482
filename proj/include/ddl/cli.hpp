#pragma once

#include <iosfwd>

namespace ddl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitVerification = 2;

/// Entry point of the `ddl` binary: train, eval, verify, heatmap, serve.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ddl::cli
