#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lbkt::cli {

/// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
/// usage. Failures print one JSON line {"error", "key"?, "message"} to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Root for timestamped run directories: `flag` if set, else
/// $LBKT_RUN_ROOT, else "runs".
std::string run_root(const std::string& flag);

}  // namespace lbkt::cli
