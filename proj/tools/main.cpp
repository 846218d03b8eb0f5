// SPDX-License-Identifier: Apache-2.0
#include "screenflow/cli.hpp"

int main(int argc, char** argv) { return screenflow::run_cli(argc, argv); }
