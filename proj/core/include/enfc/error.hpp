#pragma once

#include <stdexcept>
#include <string>

namespace enfc {

/// Root of every exception thrown by the library. The CLI maps subclasses
/// to exit codes, so new error kinds must derive from one of the groups below.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside a function's mathematical domain.
class DomainError : public Error {
public:
    using Error::Error;
};

// Shapes, widths or container sizes that do not fit together.
class StructuralError : public Error {
public:
    using Error::Error;
};

// NaN/Inf produced or consumed, or an iteration that failed to converge.
class NumericError : public Error {
public:
    using Error::Error;
};

// A metric that is not defined for the given data (e.g. R² with constant truth).
class UndefinedMetricError : public NumericError {
public:
    using NumericError::NumericError;
};

// Operation called on the wrong kind of object (e.g. wrong model head).
class UsageError : public Error {
public:
    using Error::Error;
};

// Problems with input data: missing files, malformed records, bad values.
class DataError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public DataError {
public:
    using DataError::DataError;
};

class DegenerateDataError : public DataError {
public:
    using DataError::DataError;
};

class DuplicateIdError : public DataError {
public:
    using DataError::DataError;
};

// Binary file format failures. Each has its own type so callers (and tests)
// can tell a bad magic from a truncated or corrupted payload.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

class SizeMismatchError : public FormatError {
public:
    using FormatError::FormatError;
};

class ChecksumError : public FormatError {
public:
    using FormatError::FormatError;
};

class ValidationError : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace enfc
