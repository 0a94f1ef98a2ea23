#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vaentropy {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimension or shape disagreement between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A NaN/Inf appeared, a variance went non-positive, or training diverged.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A degenerate input that the math cannot handle (zero column, collapsed spectrum).
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// Malformed or unreadable external data. Carries the byte offset or line
/// number at which parsing failed.
class DataError : public Error {
public:
    DataError(const std::string& what, std::size_t position)
        : Error(what), position_(position) {}
    explicit DataError(const std::string& what) : Error(what) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_ = 0;
};

/// Invalid configuration or command-line usage.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace vaentropy
