// SPDX-License-Identifier: Apache-2.0

#include "scd/cli.hpp"

int main(int argc, char** argv) { return scd::cli::run(argc, argv); }
