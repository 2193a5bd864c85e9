#pragma once

#include <stdexcept>
#include <string>

namespace wr {

// Error taxonomy, mapped to CLI exit codes in tools/: shape/argument/config
// errors are usage problems (exit 2), format errors are I/O problems (exit 3),
// numeric and verification failures report as exit 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor rank/extent mismatch between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid scalar argument or misuse of an API (e.g. backward on a spent tape).
struct ArgumentError : Error {
    using Error::Error;
};

// Inconsistent model or run configuration (e.g. heads not dividing width).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed or truncated file content; carries a byte offset when known.
struct FormatError : Error {
    using Error::Error;
    FormatError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (byte " + std::to_string(byte_offset) + ")") {}
};

// NaN/Inf produced by a primitive.
struct NumericError : Error {
    using Error::Error;
};

// Calibration search failed to meet its residual bound.
struct CalibrationError : Error {
    using Error::Error;
};

}  // namespace wr
