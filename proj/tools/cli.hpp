// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace gibbsnet::cli {

/// Runs one command line. Returns 0 on success, 1 for usage errors, 2 for
/// data errors and 3 for numerical failures.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gibbsnet::cli
