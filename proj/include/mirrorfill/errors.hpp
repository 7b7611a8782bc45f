#pragma once

#include <stdexcept>
#include <string>

namespace mirrorfill {

/// Inputs violate a documented precondition (bad fraction, non-binary mask, ...).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not agree.
class DimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// A query falls outside the domain of the operation (e.g. off-image point).
class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// A file does not match its binary or text format.
class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Non-finite values, divergence, or collapse during numerical work.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mirrorfill
