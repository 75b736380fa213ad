#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace multilat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDegenerate = 3;

/// Runs the multilat command line. `args` excludes the program name. Errors
/// are reported as one "error code=<n> message=<text>" line on `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace multilat::cli
