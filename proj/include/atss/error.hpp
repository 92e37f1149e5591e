#pragma once

#include <stdexcept>
#include <string>

namespace atss {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, unknown ids, invalid flags or configs.
/// The CLI maps these to exit code 2.
class InputError : public Error {
public:
    using Error::Error;
};

/// Shape or arity mismatch between tensors, records or models.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced or consumed, or a value outside its mathematical domain.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace atss
