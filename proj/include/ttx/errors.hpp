#pragma once

#include <stdexcept>
#include <string>

namespace ttx {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A rank tried to read an element it does not own; upstream communication is missing.
class OwnershipError : public Error {
public:
    using Error::Error;
};

class StructureError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Pivot residual (or delta denominator) fell to the degeneracy floor.
class DegeneratePivotError : public Error {
public:
    explicit DegeneratePivotError(const std::string& what, int dimension = -1)
        : Error(what), dimension_(dimension) {}

    /// Unfolding index k (1-based) the failure belongs to, or -1 for plain matrices.
    int dimension() const noexcept { return dimension_; }

private:
    int dimension_;
};

class SingularCoreError : public Error {
public:
    using Error::Error;
};

/// Every sampled reference value was zero.
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

class RoutingError : public Error {
public:
    using Error::Error;
};

class CollectiveContractError : public Error {
public:
    using Error::Error;
};

class DeadlockError : public Error {
public:
    using Error::Error;
};

/// Raised on surviving ranks after another rank failed.
class RuntimeAborted : public Error {
public:
    using Error::Error;
};

} // namespace ttx
