#pragma once

#include <stdexcept>
#include <string>

namespace bb84 {

/// A function argument outside the mathematical domain of the operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Parameters that are individually valid but cannot be used together.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A peer sent something the protocol state machine does not allow.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace bb84
