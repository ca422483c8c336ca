// SPDX-License-Identifier: Apache-2.0
#include "gam/cli.hpp"

int main(int argc, char** argv) { return gam::cli::run(argc, argv); }
