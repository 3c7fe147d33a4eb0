#pragma once

#include <stdexcept>
#include <string>

namespace neuroclip {

// Exit codes used by the CLI: 0 success, 2 config, 3 data, 4 training divergence.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/contract violations are a species of data error (same exit code).
struct ShapeError : DataError {
    explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace neuroclip
