#pragma once

#include <stdexcept>
#include <string>

namespace bsl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Evaluation point outside the knot domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid argument to an otherwise well-posed call (negative orders, bad sizes).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Inconsistent configuration: missing derivative matrices, bad library spec, schema violations.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Rank-deficient or singular linear system.
class SingularityError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, divergence of an integrator or optimizer.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Sparse regression pruned every candidate term.
class DiscoveryFailure : public Error {
public:
    using Error::Error;
};

/// A metric whose denominator vanishes.
class UndefinedMetric : public Error {
public:
    using Error::Error;
};

}  // namespace bsl
