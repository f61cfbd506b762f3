#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace circuitgcl {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A caller-supplied argument violates a documented precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// An internal contract was broken by the caller (e.g. backward on a non-scalar).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    using Error::Error;
};

class ValueError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed text input. Carries the 1-based line number and the offending token.
class ParseError : public Error {
public:
    ParseError(std::size_t line, std::string token, const std::string& message)
        : Error("line " + std::to_string(line) + ": " + message +
                (token.empty() ? std::string() : " (at '" + token + "')")),
          line_(line),
          token_(std::move(token)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& token() const noexcept { return token_; }

private:
    std::size_t line_;
    std::string token_;
};

/// A name could not be resolved (unknown subcircuit, net, or pin).
class ReferenceError : public Error {
public:
    ReferenceError(std::string identifier, const std::string& message, std::size_t line = 0)
        : Error((line ? "line " + std::to_string(line) + ": " : std::string()) + message +
                " '" + identifier + "'"),
          identifier_(std::move(identifier)),
          line_(line) {}

    const std::string& identifier() const noexcept { return identifier_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string identifier_;
    std::size_t line_;
};

/// Corrupt or truncated binary payload.
class FormatError : public Error {
public:
    FormatError(std::uint64_t offset, const std::string& message)
        : Error("byte " + std::to_string(offset) + ": " + message), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Version mismatch between a file and the running code.
class VersionError : public Error {
public:
    using Error::Error;
};

/// Training diverged.
class TrainingError : public Error {
public:
    TrainingError(std::size_t epoch, const std::string& message)
        : Error("epoch " + std::to_string(epoch) + ": " + message), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

}  // namespace circuitgcl
