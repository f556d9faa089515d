#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace onsep {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LoadError : public Error {
public:
    using Error::Error;
};

/// Malformed input line. Carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IntegrityError : public Error {
public:
    using Error::Error;
};

class StateError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class MappingError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Scoring backend failure. Transport failures are retryable, protocol
/// violations are not.
class BackendError : public Error {
public:
    BackendError(const std::string& what, bool retryable)
        : Error(what), retryable_(retryable) {}

    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

class ProtocolError : public BackendError {
public:
    explicit ProtocolError(const std::string& what) : BackendError(what, false) {}
};

class PredictionError : public Error {
public:
    using Error::Error;
};

}  // namespace onsep
