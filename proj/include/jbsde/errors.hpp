#pragma once

#include <stdexcept>
#include <string>

namespace jbsde {

inline constexpr const char* kVersion = "0.1.0";

/// Malformed or unknown configuration input. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A model coefficient or generator could not be evaluated.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Explosion, non-finite values, failed regressions. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace jbsde

namespace jbsde {

/// A generator failed an assumption audit and was refused. CLI exit code 1.
class AssumptionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace jbsde
