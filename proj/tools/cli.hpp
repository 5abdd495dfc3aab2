// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hopformer::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs one subcommand. args excludes the program name. Returns the process
/// exit code: 0 success, 2 usage or input error, 3 runtime abort.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hopformer::cli
