#pragma once

#include <stdexcept>
#include <string>

namespace somno {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape mismatch between an input and what an operation requires.
struct DimensionError : Error {
    using Error::Error;
};

// Semantically bad data: empty sets, out-of-range labels, degenerate batches.
struct DataError : Error {
    using Error::Error;
};

// Malformed file content; message carries a byte offset or line number.
struct FormatError : Error {
    using Error::Error;
};

// Bad argument value (negative rate, odd kernel length, unknown name).
struct ArgumentError : Error {
    using Error::Error;
};

}  // namespace somno
