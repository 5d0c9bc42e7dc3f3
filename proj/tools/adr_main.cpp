// SPDX-License-Identifier: Apache-2.0
#include "adr/cli.hpp"

int main(int argc, char** argv) { return adr::cli::run(argc, argv); }
