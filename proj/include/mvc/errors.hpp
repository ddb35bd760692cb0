#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mvc {

/// Bad or inconsistent input (files, configuration, preconditions). CLI exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed binary artifact. Carries the byte offset where parsing failed.
class ParseError : public InputError {
public:
    ParseError(const std::string& what, std::size_t offset)
        : InputError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Non-finite values, divergence and other numerical breakdowns. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace mvc
