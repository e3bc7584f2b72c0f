#pragma once

#include <stdexcept>
#include <string>

namespace freelong {

// Error categories map onto CLI exit codes:
// validation -> 1, I/O -> 2, numerical -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Malformed VLT1 container (bad magic, dtype, or payload length).
struct FormatError : IoError {
    using IoError::IoError;
};

struct NumericalError : Error {
    using Error::Error;
};

} // namespace freelong
