#pragma once

#include <stdexcept>
#include <string>

namespace mole {

/// Dimension disagreement between operands (message names both shapes).
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A record or config violates a documented invariant; message names the field.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structurally valid input that the operation cannot act on (empty mask, empty group).
class DegenerateInputError : public std::runtime_error {
public:
    explicit DegenerateInputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API misuse: stale forward cache, backward before forward, and the like.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

/// Checkpoint/config disagreement discovered at load time.
class ConfigMismatchError : public std::runtime_error {
public:
    explicit ConfigMismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File missing, unreadable, or truncated.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Remote generation backend unreachable after retries.
class TransportError : public std::runtime_error {
public:
    explicit TransportError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace mole
