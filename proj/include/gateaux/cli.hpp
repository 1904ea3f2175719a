#pragma once

// Command-line front end: estimate | sweep | mdp | dtr | compare.

#include <iosfwd>
#include <string>
#include <vector>

namespace gateaux {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int internal = 1;
inline constexpr int config = 2;
inline constexpr int data = 3;
inline constexpr int numeric = 4;
inline constexpr int infeasible = 5;
inline constexpr int degenerate = 6;
}  // namespace exit_code

/// Runs one command line (without the program name). Output schemas carry
/// `schema_version`; the log level comes from GATEAUX_LOG.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gateaux
