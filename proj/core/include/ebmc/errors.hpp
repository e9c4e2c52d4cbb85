#pragma once

#include <stdexcept>
#include <string>

namespace ebmc {

/// Violated precondition of a public operation.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

/// Operand shapes that cannot be combined. The message names both shapes.
class DimensionError : public ContractError {
 public:
  explicit DimensionError(const std::string& what) : ContractError(what) {}
};

/// Input outside an operation's mathematical domain (e.g. log of a non-positive entry).
class DomainError : public ContractError {
 public:
  explicit DomainError(const std::string& what) : ContractError(what) {}
};

/// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or incomplete configuration; carries line/key diagnostics.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem or serialization failure.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ebmc
