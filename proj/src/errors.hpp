#pragma once

#include <stdexcept>
#include <string>

namespace arcvq {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor dimensions for an operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid hyperparameter, unknown key, or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed file content (bad magic, version, structure).
class FormatError : public Error {
public:
    using Error::Error;
};

// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace arcvq
