// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace gam::cli {

// Full command-line surface of the gamseg tool. Exit codes: 0 success,
// 1 runtime or check failure, 2 usage or config error.
int run(int argc, const char* const* argv);

}  // namespace gam::cli
