// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace smoj::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitParse = 2,
  kExitValidation = 3,
  kExitRuntime = 4,
};

// Environment lookup; injectable so precedence can be tested without
// touching the process environment.
using EnvMap = std::map<std::string, std::string>;
EnvMap process_env();

// Runs one CLI invocation. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvMap& env);

// Resolves config precedence (env > flags > file > defaults) into the final
// argument list handed to the parser. Exposed for testing.
std::vector<std::string> resolve_arguments(const std::vector<std::string>& args, const EnvMap& env,
                                           std::ostream& err);

}  // namespace smoj::cli
