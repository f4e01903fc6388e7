#pragma once

#include <stdexcept>
#include <string>

namespace rdstn {

// Base of every error raised by the library. `kind()` is a stable, machine
// readable tag used by the CLI's one-line diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& message) : Error("invalid-argument", message) {}
};

class EmptyDataset : public Error {
public:
    explicit EmptyDataset(const std::string& message) : Error("empty-dataset", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

class ChecksumError : public Error {
public:
    explicit ChecksumError(const std::string& message) : Error("checksum", message) {}
};

class ConfigMismatch : public Error {
public:
    explicit ConfigMismatch(const std::string& message) : Error("config-mismatch", message) {}
};

// Raised when the training loss stops being finite.
class Divergence : public Error {
public:
    explicit Divergence(const std::string& message) : Error("divergence", message) {}
};

}  // namespace rdstn
