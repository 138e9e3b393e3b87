#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace csl {

enum class ErrorKind : std::uint8_t {
    InputValidation,
    Configuration,
    Lookup,
    Dimension,
    Protocol,
    Numerical,
    NotPsd,
    DegenerateCovariance,
    Fit,
    Format,
    Io,
};

/// Short machine-readable name, used in the CLI's structured error line.
const char* to_string(ErrorKind kind) noexcept;

/// Process exit code for an error kind: 2 configuration/validation,
/// 3 numerical failure, 4 I/O and file format.
int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Container/artifact parse failure at a known byte offset.
class FormatError : public Error {
public:
    FormatError(std::uint64_t offset, const std::string& message)
        : Error(ErrorKind::Format, message + " (at byte " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Optimizer failure; carries the final max-norm of the gradient.
class FitError : public Error {
public:
    FitError(double grad_norm, const std::string& message)
        : Error(ErrorKind::Fit, message), grad_norm_(grad_norm) {}

    double grad_norm() const noexcept { return grad_norm_; }

private:
    double grad_norm_;
};

/// Idempotency check failure; carries the residual max |P*P - P|.
class ProjectorError : public Error {
public:
    ProjectorError(double residual, const std::string& message)
        : Error(ErrorKind::Numerical, message), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

}  // namespace csl
