#pragma once

#include <stdexcept>

namespace fnc {

/// Failure caused by the inputs rather than by the program: invalid network,
/// infeasible control problem, realization outside the uncertainty set.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fnc
