#pragma once

#include <stdexcept>
#include <string>

namespace figmm {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid user-facing configuration (bad knob values, unknown keys, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// File and parsing problems; carries row/column coordinates where known.
class IoError : public Error {
public:
    using Error::Error;
};

// A covariance (or an observed submatrix of one) failed Cholesky even after
// the single permitted ridge retry. `component` is the mixture component the
// matrix belongs to, or -1 when not tied to a component.
class DegenerateCovarianceError : public Error {
public:
    DegenerateCovarianceError(const std::string& what, int component = -1)
        : Error(what), component_(component) {}
    int component() const noexcept { return component_; }

private:
    int component_;
};

// Every component density underflowed for one record.
class OutlierRecordError : public Error {
public:
    OutlierRecordError(const std::string& what, int record = -1)
        : Error(what), record_(record) {}
    int record() const noexcept { return record_; }

private:
    int record_;
};

// A component received zero total weight in an M-step.
class ComponentCollapseError : public Error {
public:
    ComponentCollapseError(const std::string& what, int component, int iteration = -1)
        : Error(what), component_(component), iteration_(iteration) {}
    int component() const noexcept { return component_; }
    int iteration() const noexcept { return iteration_; }

private:
    int component_;
    int iteration_;
};

// All importance ratios underflowed within one (record, component) cell of a
// jackknife replicate.
class DegenerateReplicateError : public Error {
public:
    DegenerateReplicateError(const std::string& what, int record, int component, int replicate)
        : Error(what), record_(record), component_(component), replicate_(replicate) {}
    int record() const noexcept { return record_; }
    int component() const noexcept { return component_; }
    int replicate() const noexcept { return replicate_; }

private:
    int record_;
    int component_;
    int replicate_;
};

class SolverError : public Error {
public:
    SolverError(const std::string& what, double residual_norm)
        : Error(what), residual_norm_(residual_norm) {}
    double residual_norm() const noexcept { return residual_norm_; }

private:
    double residual_norm_;
};

class InitializationError : public Error {
public:
    using Error::Error;
};

class UnknownCategoryError : public Error {
public:
    using Error::Error;
};

}  // namespace figmm
