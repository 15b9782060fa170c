#ifndef SFWM_COMMON_HPP
#define SFWM_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sfwm {

// Bad or missing configuration / arguments. CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A required upstream artifact (checkpoint, stats file, dataset) is absent
// or incompatible. CLI exit code 3.
struct DependencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite value or failed numeric verification. CLI exit code 4.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the byte offset where parsing failed.
struct ParseError : std::runtime_error {
    size_t offset;
    ParseError(const std::string& msg, size_t at)
        : std::runtime_error(msg + " (byte offset " + std::to_string(at) + ")"), offset(at) {}
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sfwm

#endif
