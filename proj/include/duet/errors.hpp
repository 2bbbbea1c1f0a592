#pragma once

#include <stdexcept>
#include <string>

namespace duet {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file (JSON syntax, bad header, wrong schema).
struct ParseError : Error {
    using Error::Error;
};

// A single data row is invalid; carries enough context to locate it.
struct RowError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// Backend failures, split by cause so callers can decide on retries.
struct BackendError : Error {
    using Error::Error;
};

struct TransportError : BackendError {
    using BackendError::BackendError;
};

struct TimeoutError : BackendError {
    using BackendError::BackendError;
};

// Well-formed but non-2xx (or schema-violating) response. Never retried.
struct ProtocolError : BackendError {
    int status = 0;
    std::string body;
    ProtocolError(int status_, std::string body_, const std::string& what)
        : BackendError(what), status(status_), body(std::move(body_)) {}
};

}  // namespace duet
