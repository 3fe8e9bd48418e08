#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bijou::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataFault = 2, kNumericFault = 3 };

/// Parses `args` (without the program name) and runs one verb:
/// tok-train, prep-text, prep-audio, train, export or probe.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bijou::cli
