#pragma once

#include <stdexcept>
#include <string>

namespace qfc {

// Base for every error the toolkit raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: dimension mismatches, malformed configs, states off the manifold.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A computation ran but produced something unusable (NaN, CFL breach, blown step).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace qfc
