#ifndef GBF_CLI_HPP_
#define GBF_CLI_HPP_

#include <iosfwd>

namespace gbf {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;  // invalid flags or flag values
inline constexpr int kExitFailure = 3;  // data, fit or I/O errors

// Entry point of the `gbf` command; subcommands fit, predict, simulate, cv,
// range and proximity.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gbf

#endif  // GBF_CLI_HPP_
