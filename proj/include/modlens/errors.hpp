#pragma once

#include <stdexcept>
#include <string>

namespace modlens {

// Error base; subtypes map onto CLI exit codes (see tools/modlens_main.cpp).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent configuration (exit code 2).
struct ConfigError : Error {
    using Error::Error;
};

// Dataset / checkpoint / capacity problems (exit code 3).
struct DataError : Error {
    using Error::Error;
};

// Non-finite values, divergence, numeric faults (exit code 4).
struct NumericError : Error {
    using Error::Error;
};

} // namespace modlens
