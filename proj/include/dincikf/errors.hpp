#pragma once

#include <stdexcept>
#include <string>

namespace dincikf {

/// Dimension mismatch, malformed input, or an unknown id.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation not allowed in the current state (e.g. duplicate object id).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A matrix that had to be inverted was singular or badly conditioned.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, double condition_number)
      : std::runtime_error(what + " (condition number " + std::to_string(condition_number) + ")"),
        condition_number_(condition_number) {}
  explicit NumericalFailure(const std::string& what)
      : std::runtime_error(what), condition_number_(0.0) {}

  double condition_number() const { return condition_number_; }

 private:
  double condition_number_;
};

/// Rotation angle on the pi boundary where log has no unique principal value.
class BranchAmbiguity : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Left Jacobian not invertible (rotation angle at a nonzero multiple of 2*pi).
class Singularity : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace dincikf
