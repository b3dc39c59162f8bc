#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ietrans {

// Base of every error the library raises. `kind()` is a stable machine-readable tag
// the CLI reports on stderr.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

// Malformed input text. `line()` is 1-based; 0 when not tied to a line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error("parse_error", line ? "line " + std::to_string(line) + ": " + message : message),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Well-formed input that violates a data-model invariant.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& message) : Error("invalid_data", message) {}
};

// A score table lacks a vector the caller needs.
class MissingScoreError : public Error {
public:
    explicit MissingScoreError(const std::string& message) : Error("missing_score", message) {}
};

// Inputs produced against different vocabularies.
class FingerprintMismatch : public Error {
public:
    explicit FingerprintMismatch(const std::string& message) : Error("fingerprint_mismatch", message) {}
};

// Caller passed parameters outside the operation's domain.
class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& message) : Error("invalid_argument", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io_error", message) {}
};

}  // namespace ietrans
