#pragma once

#include <stdexcept>
#include <string>

namespace cmc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when an analysis or construction precondition does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

class InfeasibleTrapezoid : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

class InvalidSignal : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

class NoCrossing : public Error {
public:
    using Error::Error;
};

class InsufficientData : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

class UnstableLinearization : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

class NotSettling : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

class ComplexRadicand : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

class DegenerateDenominator : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

class SingularFit : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

class ParseError : public Error {
public:
    ParseError(const std::string& msg, int line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

class UnknownPreset : public Error {
public:
    using Error::Error;
};

}  // namespace cmc
