#pragma once

#include <stdexcept>
#include <string>

namespace pct {

/// Bad or missing configuration (unknown keys, unparsable values). CLI exit 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input data (file formats, non-finite values, shape mismatches). CLI exit 3.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Checkpoint problems (missing file, bad magic, version mismatch). CLI exit 4.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace pct
