#pragma once

#include <stdexcept>
#include <string>

namespace memetron {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument; maps to CLI exit code 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A model-call or reward-eval budget would be exceeded. Always raised before
/// the external call is made.
class BudgetExceeded : public Error {
public:
    using Error::Error;
};

class EmptyHistoryError : public Error {
public:
    using Error::Error;
};

class DanglingParentError : public Error {
public:
    using Error::Error;
};

class NonFiniteRewardError : public Error {
public:
    using Error::Error;
};

/// Network/transport failure after retries were exhausted.
class TransportError : public Error {
public:
    using Error::Error;
    TransportError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_ = false;
};

class AuthError : public TransportError {
public:
    explicit AuthError(const std::string& what) : TransportError(what, false) {}
};

/// A completion was empty after trimming (carries the offending sample index).
class EmptyCompletionError : public Error {
public:
    EmptyCompletionError(const std::string& what, std::size_t index) : Error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class TemplateParseError : public Error {
public:
    using Error::Error;
};

class DegenerateSampleError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class MissingGenerationError : public Error {
public:
    using Error::Error;
};

/// Malformed persisted artifact; message carries file and line.
class ParseError : public Error {
public:
    using Error::Error;
};

} // namespace memetron
