#pragma once

#include <stdexcept>
#include <string>

namespace pinrod {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated precondition or shape/dimension mismatch. CLI exit code 1.
struct ContractError : Error {
    using Error::Error;
};

// NaN/Inf detected, divergence, or other runtime numeric diagnostics. CLI exit code 1.
struct NumericError : Error {
    using Error::Error;
};

// File and serialization problems. CLI exit code 2.
struct IoError : Error {
    using Error::Error;
};

}  // namespace pinrod
