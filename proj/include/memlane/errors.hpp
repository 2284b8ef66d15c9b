#pragma once

#include <stdexcept>
#include <string>

namespace memlane {

// Bad caller input: shapes, flags, out-of-range arguments.
struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Tensor dimension disagreement, reported with the offending extents.
struct ShapeError : ArgumentError {
    explicit ShapeError(const std::string& msg) : ArgumentError(msg) {}
};

// NaN/Inf appeared in a forward result; never propagated silently.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct BadMagicError : IoError {
    explicit BadMagicError(const std::string& msg) : IoError(msg) {}
};

struct VersionError : IoError {
    explicit VersionError(const std::string& msg) : IoError(msg) {}
};

struct TruncatedError : IoError {
    explicit TruncatedError(const std::string& msg) : IoError(msg) {}
};

// Synthetic scene could not satisfy its invariants within the retry budget.
struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace memlane
