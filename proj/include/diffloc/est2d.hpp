#pragma once

#include "diffloc/sdp.hpp"
#include "diffloc/types.hpp"

#include <optional>
#include <vector>

// Fixed-height 2D estimators on the virtual-anchor embedding. The squared
// path length is affine in the lifted variable u = [x, y, x^2 + y^2]:
// p_k^2 = q_k' u + c_k with q_k = [-2 x_k, 2 r_perp,k, 1] and c_k the squared
// virtual-anchor norm. GTRS solves the surrogate exactly under the lift
// constraint, USR drops the constraint, SDR relaxes the range-domain
// objective to a semidefinite program.

namespace diffloc {

// Per-anchor lifted coefficients. wt is the surrogate weight 1/(4 sigma^2 r^2).
struct LiftedCoeffs {
  Vec3 q;
  double c = 0.0;
  double delta = 0.0;  // r^2 - c
  double wt = 0.0;
};

LiftedCoeffs lifted_coeffs(const Vec3& anchor, double z0, double range, double sigma);

struct GtrsProblem {
  Mat3 M = Mat3::Zero();
  Vec3 m = Vec3::Zero();
  double gamma = 0.0;

  // Constraint pair for g(u) = u' H u + 2 h' u = u1^2 + u2^2 - u3.
  static Mat3 H() { return Vec3(1.0, 1.0, 0.0).asDiagonal(); }
  static Vec3 h() { return {0.0, 0.0, -0.5}; }

  // Context for evaluating the range-domain objective at the solution.
  MatX2 vanchors;
  VecX ranges;
  VecX rls_weights;  // 1/sigma^2
};

struct UsrSystem {
  MatX3 Q;   // stacked q_k'
  VecX b;    // r_k^2 - c_k
  VecX wt;   // diagonal surrogate weights
  MatX2 vanchors;
  VecX ranges;
  VecX rls_weights;
};

struct Lifted {
  GtrsProblem gtrs;
  UsrSystem usr;
};

Lifted build_lifted(const MatX3& anchors, double z0, const VecX& ranges,
                    const VecX& sigmas);

struct Estimate2D {
  Vec2 xy = Vec2::Zero();
  double objective = 0.0;  // range-domain least-squares value at xy
  std::optional<double> lambda_star;
  int iterations = 0;
  std::optional<double> sdp_rank_ratio;  // lambda_2 / lambda_1 of the lifted matrix
};

struct GtrsOptions {
  double tol_scale = 1e-10;  // phi tolerance = tol_scale * (1 + |gamma|)
  int max_iters = 200;
};

struct GtrsBracket {
  double lambda_lo = 0.0, phi_lo = 0.0;
  double lambda_hi = 0.0, phi_hi = 0.0;
};

// Bisection on the multiplier of the lift constraint. Linear solves use
// Cholesky factorizations of M + lambda H.
Estimate2D solve_gtrs(const GtrsProblem& p, const GtrsOptions& opts = {},
                      std::vector<GtrsBracket>* trace = nullptr);

// One-shot weighted linear least squares on the lifted system.
Estimate2D solve_usr(const UsrSystem& s);

// Surrogate value u' M u + 2 m' u + gamma.
double quadratic_cost(const GtrsProblem& p, const Vec3& u);

// Stationary point u(lambda) of the GTRS Lagrangian; needs M + lambda H PD.
Vec3 gtrs_stationary_point(const GtrsProblem& p, double lambda);

struct SdrProblem {
  int dim = 0;     // K + 3
  VecX weights;    // range-domain weights 1/sigma^2
  MatX2 vanchors;  // embedding at the fixed height
  MatX dist;       // pairwise virtual-anchor distances, zero diagonal
  VecX ranges;
};

SdrProblem build_sdr(const MatX3& anchors, double z0, const VecX& ranges,
                     const VecX& sigmas);

struct SdrOptions {
  sdp::SolveOptions solver{};

  SdrOptions() { solver.keep_trace = false; }
};

// The conic form of the lifted range-domain problem (exposed for tests and
// the triplet dump). Weights are normalized to mean one and all lengths by
// sdr_length_scale(p), which keeps the conic data near unit magnitude; the
// recovered coordinates are sdr_length_scale(p) times the solution's last
// column. Neither normalization moves the minimizer.
sdp::ConicProgram sdr_conic_program(const SdrProblem& p);
double sdr_length_scale(const SdrProblem& p);

Estimate2D solve_sdr(const SdrProblem& p, const SdrOptions& opts = {});

}  // namespace diffloc
