#pragma once

#include <stdexcept>
#include <string>

namespace orbcorr {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (e.g. a <= 0).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Gauss variational coupling evaluated where it is singular (e ~ 0 or sin i ~ 0).
class SingularityError : public Error {
public:
    SingularityError(std::string element, const std::string& what)
        : Error(what), element_(std::move(element)) {}
    const std::string& element() const noexcept { return element_; }

private:
    std::string element_;
};

/// Parabolic, hyperbolic or otherwise unsupported orbit regime.
class UnsupportedRegimeError : public Error {
public:
    using Error::Error;
};

/// A requested maneuver target cannot be reached with the given geometry/time.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// Propagation produced an invalid state; carries the epoch of the failed step.
class PropagationError : public Error {
public:
    PropagationError(double epoch, const std::string& what) : Error(what), epoch_(epoch) {}
    double epoch() const noexcept { return epoch_; }

private:
    double epoch_;
};

/// Shape or dimension mismatch in numeric containers.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Numerically ill-posed linear algebra (e.g. singular innovation covariance).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Invalid user configuration (schema, ranges, unknown keys).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace orbcorr
