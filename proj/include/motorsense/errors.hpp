#pragma once

#include <stdexcept>
#include <string>

namespace motorsense
{

/// Base of every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// An input lies outside the domain of a physical law (e.g. non-finite temperature).
class DomainError : public Error
{
public:
    using Error::Error;
};

/// A computation produced a non-finite value.
class NumericalError : public Error
{
public:
    using Error::Error;
};

/// An iterative solver failed to converge within its budget.
class DivergenceError : public Error
{
public:
    using Error::Error;
};

/// The requested calibration targets cannot be met simultaneously.
class CalibrationError : public Error
{
public:
    using Error::Error;
};

/// The ODE integrator could not advance (step-size underflow).
class IntegrationError : public Error
{
public:
    IntegrationError(const std::string &what, double time)
        : Error(what)
        , time_(time)
    {
    }

    /// Simulation time at which integration broke down [s].
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// A caller supplied an invalid argument (dimension mismatch, bad window, ...).
class ArgumentError : public Error
{
public:
    using Error::Error;
};

/// Reading or writing a file failed, or a file was malformed.
class IoError : public Error
{
public:
    using Error::Error;
};

/// A pipeline stage was run before the stage producing its inputs.
class StageDependencyError : public Error
{
public:
    using Error::Error;
};

} // namespace motorsense
