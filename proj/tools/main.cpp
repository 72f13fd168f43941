// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/cli.hpp"

int main(int argc, char** argv) { return stemsplat::cli_main(argc, argv); }
