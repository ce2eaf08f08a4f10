#pragma once

#include <stdexcept>
#include <string>

namespace stratrob {

// Malformed arguments: wrong dimensions, out-of-range indices, empty sets.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A request whose enumeration or grid would exceed the fixed desk-scale guards.
class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Mathematically undefined quantity (zero denominator, constant series).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Labels or records that violate the dataset contract.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace stratrob
