#pragma once

#include <stdexcept>
#include <string>

namespace pllsim {

/// Base class for everything this library throws on purpose.  Catching
/// pllsim::Error is enough to separate "the model/config/run is bad" from
/// genuine programming mistakes (which surface as assertions or std:: types).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A constructor or factory was handed an out-of-range value (time constant,
/// gain, grid size, ...).  The message names the offending field.
struct ParameterError : Error {
  using Error::Error;
};

/// Transfer function evaluated at (or too close to) its pole.
struct PoleError : Error {
  using Error::Error;
};

/// Derivative requested exactly at a kink of a piecewise-linear detector
/// characteristic, in a context where a one-sided value is not acceptable.
struct CornerError : Error {
  using Error::Error;
};

/// An operation that relies on odd symmetry of the detector characteristic
/// was given a characteristic that is not odd.
struct SymmetryError : Error {
  using Error::Error;
};

/// A saddle-node (degenerate) equilibrium where a hyperbolic saddle was
/// required, e.g. when tracing separatrices at the edge of existence.
struct DegenerateError : Error {
  using Error::Error;
};

/// Separatrix seeding failed (eigenvector could not be oriented).
struct SeedError : Error {
  using Error::Error;
};

/// An iteration (step-size control, bisection, bracketing) failed to
/// converge within its budget.
struct ConvergenceError : Error {
  using Error::Error;
};

/// Query outside the range covered by a traced curve or a trajectory.
struct InterpolationError : Error {
  using Error::Error;
};

/// The integrator produced a non-finite state; message carries time/state.
struct NonFiniteError : Error {
  using Error::Error;
};

/// A monotonicity/energy certificate failed; message names trajectory/time.
struct ViolationError : Error {
  using Error::Error;
};

/// Filesystem problem while reading or writing an artifact.
struct IoError : Error {
  using Error::Error;
};

/// Refusing to write a table with zero data rows.
struct EmptyTableError : Error {
  using Error::Error;
};

/// Bad run configuration: unknown key, wrong type, missing required field.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace pllsim
