// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace stemsplat {

/// Batch front-end: subcommands synth, sample, measure, eval, pipeline.
/// Returns the process exit status: 0 on success, 2 on usage or
/// configuration errors, 1 on runtime failures.
int cli_main(int argc, const char* const* argv);

} // namespace stemsplat
