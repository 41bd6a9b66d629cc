#pragma once

#include <stdexcept>
#include <string>

namespace isoattack {

// Exit codes the CLI maps errors to. 1 is reserved for unexpected crashes.
enum class ExitCode : int {
    Ok = 0,
    Config = 2,
    Io = 3,
    Backend = 4,
};

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ExitCode exit_code() const { return code_; }

private:
    ExitCode code_;
};

// Bad configuration, bad flags, or malformed input data.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ExitCode::Config, what) {}
};

// Filesystem problems: missing artifacts, unwritable stores.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ExitCode::Io, what) {}
};

class BackendError : public Error {
public:
    explicit BackendError(const std::string& what) : Error(ExitCode::Backend, what) {}
};

// Connectivity or timeout, after transport retries were exhausted.
class TransportError : public BackendError {
public:
    explicit TransportError(const std::string& what) : BackendError(what) {}
};

// Response body that does not match the expected wire shape.
class ProtocolError : public BackendError {
public:
    explicit ProtocolError(const std::string& what) : BackendError(what) {}
};

// 401/403 from the endpoint.
class AuthError : public BackendError {
public:
    explicit AuthError(const std::string& what) : BackendError(what) {}
};

// 429 that persisted past the backoff budget.
class RateLimited : public BackendError {
public:
    explicit RateLimited(const std::string& what) : BackendError(what) {}
};

}  // namespace isoattack
