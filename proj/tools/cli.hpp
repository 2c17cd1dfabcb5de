#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace calib::cli {

// Exit statuses.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericError = 4;

// Runs the `calib` tool; args excludes the program name. Reports go to `out`,
// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace calib::cli
