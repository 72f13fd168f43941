// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace stemsplat {

/// Base for everything this library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File missing, unreadable, or unwritable.
struct IoError : Error {
    using Error::Error;
};

/// The file parsed but does not match the documented layout
/// (missing property, unsupported camera model, bad header, ...).
struct FormatError : Error {
    using Error::Error;
};

/// Structurally valid file carrying impossible values
/// (non-finite mean, duplicate key, dangling reference, ...).
struct DataError : Error {
    using Error::Error;
};

/// Mismatched or invalid run configuration; message names the field.
struct ConfigError : Error {
    using Error::Error;
};

/// Ground elevation could not be resolved for a tree.
struct GroundLookupError : Error {
    GroundLookupError(int tree_id, const std::string& what)
        : Error(what), tree_id(tree_id) {}
    int tree_id;
};

} // namespace stemsplat
