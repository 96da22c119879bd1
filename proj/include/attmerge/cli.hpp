// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace attmerge {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `attmerge` tool; `args` excludes the program name.
///
///   gen-data         write a synthetic layer-band dataset
///   train            train a model, write checkpoint and log
///   evaluate         score datasets with a checkpoint, report EERs
///   inspect-weights  per-layer merging weights as CSV
///   gradcheck        finite-difference check of every trainable block
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace attmerge
