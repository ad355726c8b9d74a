#pragma once

#include <stdexcept>
#include <string>

namespace c2d {

// Parameter/range violations (bad sigma, alpha out of [0,1], inverted ranges).
using ParamError = std::invalid_argument;

// Malformed input files: bad magic, truncated payload, shape mismatch on disk.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// On-disk state inconsistent with its manifest (missing/extra bank entries).
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

// API called out of order (backward without forward, double bank update).
struct StateError : std::logic_error {
    explicit StateError(const std::string& msg) : std::logic_error(msg) {}
};

// Non-finite values where finiteness is a contract (gradients, losses).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Coordinates or regions outside the host grid.
struct BoundsError : std::out_of_range {
    explicit BoundsError(const std::string& msg) : std::out_of_range(msg) {}
};

} // namespace c2d
