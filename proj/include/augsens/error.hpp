#pragma once

#include <stdexcept>
#include <string>

namespace augsens {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parameter outside the admissible domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Tensor shapes do not agree with what an operation expects.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A sequence argument has the wrong length for its companion argument.
class ArityError : public Error {
public:
    using Error::Error;
};

class UnsupportedDimensionError : public Error {
public:
    using Error::Error;
};

class InvalidBudgetError : public Error {
public:
    using Error::Error;
};

/// A conditional variance was requested from fewer than two draws.
class VarianceUndefinedError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated container / image file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A segment needs a residual source that lies outside of it.
class DanglingSkipError : public Error {
public:
    using Error::Error;
};

/// Combinatorial guard of the exact enumerators.
class RefusalError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage was started before the stage it depends on finished.
class StageDependencyError : public Error {
public:
    using Error::Error;
};

}  // namespace augsens
