#pragma once

#include <stdexcept>
#include <string>

namespace sgne {

/// Invalid instance, configuration or dimension mismatch.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Operation needs data the instance does not carry (e.g. an exact oracle).
class UnsupportedOperation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// NaN/Inf produced by an update, or a failed numerical certification.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace sgne
