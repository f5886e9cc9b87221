// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sparselab::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  ///< unexpected internal error
  kExitUsage = 2,
  kExitNumeric = 3,
};

/// Runs one subcommand. `args` excludes the program name. Every command
/// writes config.txt to its output directory; `--config <file>` replays such
/// a file, with explicit flags taking precedence over its entries.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sparselab::cli
