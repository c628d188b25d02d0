#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sersyn {

/// Base for every error the toolkit raises. Subclasses map onto CLI exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or missing configuration (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Remote endpoint failed after all retries (exit code 3).
class TransportError : public Error {
public:
    TransportError(const std::string& what, int last_status)
        : Error(what), m_status(last_status) {}
    int last_status() const noexcept { return m_status; }

private:
    int m_status;
};

/// Input data violates a contract (exit code 4).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed binary file. Carries the byte offset where decoding stopped.
class FormatError : public ValidationError {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : ValidationError(what + " (at byte offset " + std::to_string(offset) + ")"),
          m_offset(offset) {}
    std::uint64_t offset() const noexcept { return m_offset; }

private:
    std::uint64_t m_offset;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace sersyn
