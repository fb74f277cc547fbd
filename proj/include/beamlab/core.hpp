#pragma once

// Common types and error taxonomy shared by every beamlab module.

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace beamlab {

using cplx = std::complex<double>;
using Vec  = Eigen::VectorXd;
using Mat  = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

constexpr cplx I_UNIT{0.0, 1.0};

// Base class for everything beamlab throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition (bad argument, not-null vector, ...).
struct PreconditionError : Error {
    using Error::Error;
};

// Bad configuration: out-of-range parameter, CFL violation, unknown key, ...
struct ConfigError : Error {
    using Error::Error;
};

// Numerics failed to meet a stated tolerance (non-convergence, degeneracy, blow-up).
struct NumericError : Error {
    using Error::Error;
};

inline double sq(double x) { return x * x; }

} // namespace beamlab
