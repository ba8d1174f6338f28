#pragma once

#include <stdexcept>
#include <string>

namespace insight {

/// Root of every error the engine raises. `exit_code()` maps the failure
/// family onto the CLI's documented exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

// Configuration / precondition problems (exit 2).
class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class InvalidCategory : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class PreconditionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Dataset problems (exit 3).
class DatasetError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class SchemaError : public DatasetError {
public:
    SchemaError(std::size_t line, const std::string& what)
        : DatasetError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class MissingImage : public DatasetError {
public:
    MissingImage(std::string id, const std::string& what)
        : DatasetError("record '" + id + "': " + what), id_(std::move(id)) {}
    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

class InsufficientClass : public DatasetError {
public:
    using DatasetError::DatasetError;
};

// Backend problems (exit 4).
class BackendError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
    /// Transient failures are retried by the live client.
    virtual bool transient() const noexcept { return false; }
};

class NetworkError : public BackendError {
public:
    using BackendError::BackendError;
    bool transient() const noexcept override { return true; }
};

class ProtocolError : public BackendError {
public:
    using BackendError::BackendError;
};

class AuthError : public BackendError {
public:
    using BackendError::BackendError;
};

class ReplayMiss : public BackendError {
public:
    explicit ReplayMiss(std::string key)
        : BackendError("no transcript entry for key " + key), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

// Artifact / filesystem problems (exit 5).
class ArtifactError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 5; }
};

class IoError : public ArtifactError {
public:
    using ArtifactError::ArtifactError;
};

class CorruptTranscript : public ArtifactError {
public:
    using ArtifactError::ArtifactError;
};

class MissingArtifact : public ArtifactError {
public:
    using ArtifactError::ArtifactError;
};

// Pure-function argument errors.
class MetricError : public Error {
public:
    using Error::Error;
};

class LengthMismatch : public MetricError {
public:
    using MetricError::MetricError;
};

class EmptyInput : public MetricError {
public:
    using MetricError::MetricError;
};

class NoTaggedItems : public MetricError {
public:
    using MetricError::MetricError;
};

class EmptyTraceList : public Error {
public:
    using Error::Error;
};

}  // namespace insight
