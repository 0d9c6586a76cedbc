// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nbf {

// Subcommand dispatcher behind the `nbfusion` binary. Returns the process
// exit code: 0 on success, 1 on runtime/file errors, 2 on usage errors
// (usage text goes to the error stream).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nbf
