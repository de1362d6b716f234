#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace proxbo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied an argument outside the operation's contract.
class InputError : public Error {
public:
    using Error::Error;
};

/// Malformed text input. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Well-formed input with inconsistent content (e.g. conflicting duplicates).
class DataError : public Error {
public:
    using Error::Error;
};

/// Query outside the landscape's domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Oracle budget exhausted.
class BudgetError : public Error {
public:
    using Error::Error;
};

/// Operation invoked on an object in the wrong state (e.g. untrained ensemble).
class StateError : public Error {
public:
    using Error::Error;
};

/// Surrogate training diverged.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Non-finite intermediate in numeric code outside of training.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Campaign config rejected. The message starts with the offending key path.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A campaign round could not be completed.
class RoundError : public Error {
public:
    using Error::Error;
};

class AggregationError : public Error {
public:
    using Error::Error;
};

class SizeError : public Error {
public:
    using Error::Error;
};

}  // namespace proxbo
