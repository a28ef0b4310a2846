#ifndef MCPARAREAL_ERRORS_HPP
#define MCPARAREAL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mcparareal {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite value produced by a time stepper. Carries the slice/step that produced it.
class NumericalBlowup : public Error {
public:
    NumericalBlowup(const std::string& what, long slice = -1, long step = -1)
        : Error(what), slice_(slice), step_(step) {}
    long slice() const { return slice_; }
    long step() const { return step_; }

private:
    long slice_;
    long step_;
};

class IntegrationFailure : public Error {
public:
    using Error::Error;
};

class DegenerateMatch : public Error {
public:
    using Error::Error;
};

class InvalidPartition : public Error {
public:
    using Error::Error;
};

class Singularity : public Error {
public:
    using Error::Error;
};

class BoundInapplicable : public Error {
public:
    using Error::Error;
};

class InvalidCostModel : public Error {
public:
    using Error::Error;
};

class UnsupportedComparison : public Error {
public:
    using Error::Error;
};

class DegenerateReference : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Wraps an error raised inside a Parareal run with the (iteration, slice) it came from.
class PararealFailure : public Error {
public:
    PararealFailure(const std::string& what, int iteration, int slice)
        : Error(what), iteration_(iteration), slice_(slice) {}
    int iteration() const { return iteration_; }
    int slice() const { return slice_; }

private:
    int iteration_;
    int slice_;
};

} // namespace mcparareal

#endif
