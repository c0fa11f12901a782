#pragma once

#include <stdexcept>
#include <string>

namespace lac {

// Tensor extents disagree with what an operation requires.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf reached an operation that requires finite input.
class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Malformed file or stream (tensor container, trace, CSV, PGM).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or argument value.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace lac
