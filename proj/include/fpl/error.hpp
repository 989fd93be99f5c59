#pragma once

#include <stdexcept>
#include <string>

namespace fpl {

// Base of all library errors. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (singular rate, bad shape).
class DomainError : public Error {
public:
    using Error::Error;
};

// Invalid or inconsistent configuration / input data.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite values, divergence, or a violated stability bound.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Interpolation geometry that leaves the saddle system singular.
class DegenerateGeometryError : public Error {
public:
    using Error::Error;
};

// A requested allocation exceeds the configured budget.
class ResourceError : public Error {
public:
    using Error::Error;
};

}  // namespace fpl
