#pragma once

#include <stdexcept>
#include <string>

namespace entroloss {

/// Input outside the mathematical domain of an operation (p outside [0,1],
/// alpha < 1, bad epsilon, invalid configuration values).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Tensor or layer shapes that do not chain.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File system, decoding or encoding failures. The message names the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values produced during optimization.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An API called out of order, e.g. backward without a recorded forward pass.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace entroloss
