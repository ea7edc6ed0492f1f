#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace osdal {

inline constexpr const char* kVersion = "0.1.0";

using Vec = std::vector<double>;

// Raised when a caller breaks a pool-transition precondition (e.g. annotating
// a sample that is not in the unlabeled pool).
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised by dataset/config readers; message carries file and line context.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a config document fails schema validation; message carries the
// offending field path.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace osdal
