#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace asyncdet {

// Base of every error the library throws. The CLI maps the concrete type to
// an exit code (see tools/commands.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A parameter or input violates an operation's precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

class DegenerateInputError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DimensionMismatchError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Frames pushed out of order, duplicated, or with a gap.
class StreamOrderError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// A sample outside the buffered range was requested.
class InsufficientLookaheadError : public Error {
public:
    using Error::Error;
};

// The subspace estimate for tick t was built from a window that contains t.
class ContractViolationError : public Error {
public:
    using Error::Error;
};

class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, double residual, int iterations)
        : Error(what), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ParseError : public IoError {
public:
    ParseError(const std::string& what, std::size_t line)
        : IoError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace asyncdet
