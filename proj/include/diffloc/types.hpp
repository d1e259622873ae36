#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace diffloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;
using MatX2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

// Singularity guard for derivative code (meters). Cost evaluation needs no guard.
inline constexpr double kDegeneracyEps = 1e-9;

// Floor on |r_k| inside the squared-range weights 1/(4 sigma^2 r^2).
inline constexpr double kRangeFloor = 1e-3;  // meters

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

struct IoFailure : Error {
  using Error::Error;
};

struct DegenerateGeometry : Error {
  using Error::Error;
};

struct TooFewAnchors : Error {
  using Error::Error;
};

struct RangeUnderflow : Error {
  using Error::Error;
};

struct BracketNotFound : Error {
  using Error::Error;
};

struct MaxItersExceeded : Error {
  using Error::Error;
};

struct SingularNormalMatrix : Error {
  using Error::Error;
};

struct SolverFailed : Error {
  using Error::Error;
};

struct NumericalBreakdown : Error {
  using Error::Error;
};

struct SingularFim : Error {
  using Error::Error;
};

struct AllSeedsFailed : Error {
  using Error::Error;
};

}  // namespace diffloc
