#pragma once

#include <stdexcept>
#include <string>

namespace usflab {

// Base for everything this library throws.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated a documented precondition.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Bad configuration or malformed input file.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A non-finite value appeared during evaluation; carries the source op.
class NumericError : public Error {
public:
    NumericError(const std::string& where, const std::string& msg)
        : Error(where + ": " + msg), where_(where) {}
    const std::string& where() const { return where_; }

private:
    std::string where_;
};

// Singular triangular system or non-positive-definite covariance.
class SingularError : public Error {
public:
    explicit SingularError(const std::string& msg) : Error(msg) {}
};

} // namespace usflab
