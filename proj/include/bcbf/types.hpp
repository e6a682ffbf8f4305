#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace bcbf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Base class for everything this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user-facing input: malformed config files, dimension mismatches,
// out-of-range parameters. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A mathematical precondition does not hold (non-Hurwitz A, non-SPD Q,
// center outside the safe set, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A computation produced results outside its guaranteed accuracy
// (residual checks, cycling guards, uncertain infeasibility).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A rollout or simulation left the numerically representable region.
// Carries the time at which integration was abandoned.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double theta_at_failure)
      : Error(what), theta(theta_at_failure) {}
  double theta;
};

// A model expression is singular at the requested point (singular
// decoupling matrix, non-positive longitudinal speed, ...).
class SingularityError : public Error {
 public:
  using Error::Error;
};

// A controller synthesis step failed (no equilibrium input, invalid
// level set, ...).
class SynthesisError : public Error {
 public:
  using Error::Error;
};

}  // namespace bcbf
