#pragma once

#include <stdexcept>
#include <string>

namespace unic {

// Error taxonomy shared across the library. CLI maps ConfigError to exit
// code 2 and everything else to 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/axis/bounds violations (mismatched matmul operands, bad slice, ...).
struct DimensionError : Error {
    using Error::Error;
};

// Out-of-range element access (class labels, row gathers).
struct IndexError : Error {
    using Error::Error;
};

// API preconditions: non-scalar loss passed to backward, standardize before
// the first update, empty teacher set, and similar.
struct ContractError : Error {
    using Error::Error;
};

// Invalid run configuration (plan files, encoder configs, CLI usage).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed binary container; message carries the byte offset when known.
struct FormatError : Error {
    using Error::Error;
};

}  // namespace unic
