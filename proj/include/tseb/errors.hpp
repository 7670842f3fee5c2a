#pragma once

#include <stdexcept>
#include <string>

namespace tseb {

// Invalid or inconsistent input data (bad CSV, schema mismatch, degenerate columns).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration (out-of-range parameters, unresolvable paths).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure inside an optimizer that survived all fallbacks.
class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tseb
