#include "diffloc/est2d.hpp"

#include "diffloc/geometry.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace diffloc {

LiftedCoeffs lifted_coeffs(const Vec3& anchor, double z0, double range, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("lifted_coeffs: sigma must be positive");
  if (std::abs(range) < kRangeFloor)
    throw RangeUnderflow("lifted_coeffs: |range| below floor");
  const Vec2 va = virtual_anchor(anchor, z0);
  LiftedCoeffs lc;
  lc.q = Vec3(-2.0 * va.x(), -2.0 * va.y(), 1.0);  // -2 x_k, 2 r_perp,k, 1
  lc.c = va.squaredNorm();
  lc.delta = range * range - lc.c;
  lc.wt = 1.0 / (4.0 * sigma * sigma * range * range);
  return lc;
}

Lifted build_lifted(const MatX3& anchors, double z0, const VecX& ranges,
                    const VecX& sigmas) {
  const Eigen::Index k = anchors.rows();
  if (k < 3) throw TooFewAnchors("build_lifted: need K >= 3");
  check_same_length(k, ranges.size(), sigmas.size(), "build_lifted");

  Lifted out;
  out.usr.Q.resize(k, 3);
  out.usr.b.resize(k);
  out.usr.wt.resize(k);
  MatX2 va(k, 2);
  for (Eigen::Index i = 0; i < k; ++i) {
    const LiftedCoeffs lc = lifted_coeffs(anchors.row(i), z0, ranges(i), sigmas(i));
    out.usr.Q.row(i) = lc.q.transpose();
    out.usr.b(i) = lc.delta;
    out.usr.wt(i) = lc.wt;
    va.row(i) = virtual_anchor(anchors.row(i), z0).transpose();
    out.gtrs.M.noalias() += lc.wt * (lc.q * lc.q.transpose());
    out.gtrs.m.noalias() -= lc.wt * lc.delta * lc.q;
    out.gtrs.gamma += lc.wt * lc.delta * lc.delta;
  }
  const VecX w = weights_from_sigmas(sigmas);
  out.gtrs.vanchors = va;
  out.gtrs.ranges = ranges;
  out.gtrs.rls_weights = w;
  out.usr.vanchors = va;
  out.usr.ranges = ranges;
  out.usr.rls_weights = w;
  return out;
}

double quadratic_cost(const GtrsProblem& p, const Vec3& u) {
  return u.dot(p.M * u) + 2.0 * p.m.dot(u) + p.gamma;
}

namespace {

// Whether M + lambda H is positive definite, and the factorization if so.
bool pd_factor(const Mat3& m_scaled, double lambda, Eigen::LLT<Mat3>& llt) {
  Mat3 a = m_scaled;
  a(0, 0) += lambda;
  a(1, 1) += lambda;
  llt.compute(a);
  return llt.info() == Eigen::Success;
}

// Infimum of lambda with M + lambda H positive definite. With H = diag(1,1,0)
// the Schur complement in the (3,3) entry gives it exactly: M + lambda H is
// PD iff M33 > 0 and A + lambda I - b b'/M33 is PD, where A is the leading
// 2x2 block and b the coupling column. Hence the infimum is the largest
// eigenvalue of b b'/M33 - A.
double pd_infimum(const Mat3& m_scaled) {
  const double c = m_scaled(2, 2);
  if (!(c > 0.0))
    throw BracketNotFound("solve_gtrs: vanishing squared-range curvature");
  const Mat2 a = m_scaled.topLeftCorner<2, 2>();
  const Vec2 b = m_scaled.topRightCorner<2, 1>();
  const Mat2 shifted = (b * b.transpose()) / c - a;
  // Largest eigenvalue of a symmetric 2x2 matrix.
  const double tr = shifted.trace();
  const double det = shifted.determinant();
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  return tr / 2.0 + disc;
}

}  // namespace

Vec3 gtrs_stationary_point(const GtrsProblem& p, double lambda) {
  Mat3 a = p.M;
  a(0, 0) += lambda;
  a(1, 1) += lambda;
  Eigen::LLT<Mat3> llt(a);
  if (llt.info() != Eigen::Success)
    throw InvalidArgument("gtrs_stationary_point: M + lambda H not positive definite");
  return llt.solve(-(p.m + lambda * GtrsProblem::h()));
}

Estimate2D solve_gtrs(const GtrsProblem& p, const GtrsOptions& opts,
                      std::vector<GtrsBracket>* trace) {
  // Internal scale normalization: dividing (M, m, gamma) by s maps the
  // multiplier lambda to lambda/s and leaves u(lambda) unchanged.
  const double scale = std::max(p.M.trace() / 3.0, 1e-300);
  const Mat3 ms = p.M / scale;
  const Vec3 mv = p.m / scale;
  const Vec3 h = GtrsProblem::h();
  const double tol = opts.tol_scale * (1.0 + std::abs(p.gamma)) / scale;

  Eigen::LLT<Mat3> llt;
  auto u_of = [&](double lam) -> Vec3 {
    Mat3 a = ms;
    a(0, 0) += lam;
    a(1, 1) += lam;
    llt.compute(a);
    if (llt.info() != Eigen::Success)
      throw BracketNotFound("solve_gtrs: lost positive definiteness inside bracket");
    return llt.solve(-(mv + lam * h));
  };
  auto phi_of = [&](const Vec3& u) { return u.head<2>().squaredNorm() - u.z(); };

  const double lam_lower = pd_infimum(ms);

  double lam_lo = std::max(0.0, lam_lower + 1e-8);
  {
    // Nudge off the boundary if the offset landed on a semidefinite point.
    double off = 1e-8;
    while (!pd_factor(ms, lam_lo, llt) && off < 1e2) {
      off *= 10.0;
      lam_lo = std::max(0.0, lam_lower + off);
    }
  }

  int evals = 0;
  Vec3 u = u_of(lam_lo);
  double phi_lo = phi_of(u);
  ++evals;

  auto finish = [&](double lam, const Vec3& usol, int iters) {
    Estimate2D e;
    e.xy = usol.head<2>();
    e.objective = rls_cost_va(p.vanchors, p.rls_weights, p.ranges, e.xy);
    e.lambda_star = lam * scale;
    e.iterations = iters;
    return e;
  };

  if (std::abs(phi_lo) <= tol) return finish(lam_lo, u, evals);

  if (phi_lo < 0.0) {
    // Need smaller lambda: walk toward the positive definite infimum.
    bool found = false;
    for (int i = 0; i < 200 && lam_lo - lam_lower > 1e-18 * (1.0 + std::abs(lam_lower)); ++i) {
      lam_lo = lam_lower + 0.1 * (lam_lo - lam_lower);
      Vec3 cand;
      try {
        cand = u_of(lam_lo);
      } catch (const BracketNotFound&) {
        break;
      }
      ++evals;
      const double ph = phi_of(cand);
      if (std::abs(ph) <= tol) return finish(lam_lo, cand, evals);
      if (ph >= 0.0) {
        phi_lo = ph;
        u = cand;
        found = true;
        break;
      }
    }
    if (!found)
      throw BracketNotFound("solve_gtrs: phi stays negative down to the PD boundary");
  }

  // Expand the upper end geometrically until phi changes sign.
  double lam_hi = 1.0;
  while (lam_hi <= lam_lo) lam_hi *= 2.0;
  Vec3 u_hi = u_of(lam_hi);
  ++evals;
  double phi_hi = phi_of(u_hi);
  int guard = 0;
  while (phi_hi > 0.0) {
    if (++guard > 200)
      throw BracketNotFound("solve_gtrs: no sign change after upper expansion");
    lam_lo = lam_hi;
    phi_lo = phi_hi;
    u = u_hi;
    lam_hi *= 2.0;
    u_hi = u_of(lam_hi);
    ++evals;
    phi_hi = phi_of(u_hi);
  }
  if (std::abs(phi_hi) <= tol) return finish(lam_hi, u_hi, evals);

  // Bisection; phi is monotone nonincreasing on the PD interval.
  double lam = lam_lo;
  Vec3 u_best = u;
  double phi_best = std::abs(phi_lo);
  for (int t = 0; t < opts.max_iters; ++t) {
    if (trace) trace->push_back({lam_lo * scale, phi_lo, lam_hi * scale, phi_hi});
    lam = 0.5 * (lam_lo + lam_hi);
    const Vec3 um = u_of(lam);
    ++evals;
    const double ph = phi_of(um);
    if (std::abs(ph) < phi_best) {
      phi_best = std::abs(ph);
      u_best = um;
    }
    if (std::abs(ph) <= tol) return finish(lam, um, evals);
    if (ph > 0.0) {
      lam_lo = lam;
      phi_lo = ph;
    } else {
      lam_hi = lam;
      phi_hi = ph;
    }
    if (lam_hi - lam_lo <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(lam_hi)))
      return finish(lam, u_best, evals);  // multiplier resolved to machine precision
  }
  throw MaxItersExceeded("solve_gtrs: bisection budget exhausted");
}

Estimate2D solve_usr(const UsrSystem& s) {
  if (s.Q.rows() < 3) throw TooFewAnchors("solve_usr: need K >= 3");
  const Mat3 normal = s.Q.transpose() * s.wt.asDiagonal() * s.Q;
  const Vec3 rhs = s.Q.transpose() * (s.wt.cwiseProduct(s.b));
  Eigen::SelfAdjointEigenSolver<Mat3> es(normal);
  const double lmin = es.eigenvalues()(0);
  const double lmax = es.eigenvalues()(2);
  if (!(lmin > 0.0) || lmax / lmin > 1e12)
    throw SingularNormalMatrix("solve_usr: normal matrix singular or ill-conditioned");
  const Vec3 u = es.eigenvectors() *
                 (es.eigenvectors().transpose() * rhs).cwiseQuotient(es.eigenvalues());
  Estimate2D e;
  e.xy = u.head<2>();
  e.objective = rls_cost_va(s.vanchors, s.rls_weights, s.ranges, e.xy);
  e.iterations = 1;
  return e;
}

SdrProblem build_sdr(const MatX3& anchors, double z0, const VecX& ranges,
                     const VecX& sigmas) {
  const Eigen::Index k = anchors.rows();
  if (k < 3) throw TooFewAnchors("build_sdr: need K >= 3");
  check_same_length(k, ranges.size(), sigmas.size(), "build_sdr");
  SdrProblem p;
  p.dim = static_cast<int>(k) + 3;
  p.weights = weights_from_sigmas(sigmas);
  p.vanchors = virtual_anchors(anchors, z0);
  p.ranges = ranges;
  p.dist.setZero(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i + 1; j < k; ++j) {
      p.dist(i, j) = (p.vanchors.row(i) - p.vanchors.row(j)).norm();
      p.dist(j, i) = p.dist(i, j);
    }
  return p;
}

double sdr_length_scale(const SdrProblem& p) {
  return std::max({1.0, p.ranges.cwiseAbs().maxCoeff(),
                   p.vanchors.cwiseAbs().maxCoeff()});
}

sdp::ConicProgram sdr_conic_program(const SdrProblem& p) {
  const int k = static_cast<int>(p.ranges.size());
  const int n = p.dim;
  const int last = n - 1;
  // Normalize weights to mean one and lengths to unit magnitude. Both are
  // exact reparameterizations; they keep the conic data near unit scale.
  const VecX w = p.weights / p.weights.mean();
  const double ell = sdr_length_scale(p);
  const VecX ranges = p.ranges / ell;
  const MatX2 vanchors = p.vanchors / ell;

  sdp::ConicProgram cp;
  cp.n = n;
  cp.C = MatX::Zero(n, n);
  for (int i = 0; i < k; ++i) {
    cp.C(i + 2, i + 2) += w(i);
    cp.C(i + 2, last) -= w(i) * ranges(i);
    cp.C(last, i + 2) -= w(i) * ranges(i);
    cp.c0 += w(i) * ranges(i) * ranges(i);
  }

  // Z(last,last) = 1.
  {
    MatX a = MatX::Zero(n, n);
    a(last, last) = 1.0;
    cp.eq_mats.push_back(a);
  }
  // Range-variable coupling: Z_tt = Z_xx + Z_yy - 2 a' [Z_x1; Z_y1] + |a|^2.
  for (int i = 0; i < k; ++i) {
    MatX a = MatX::Zero(n, n);
    a(i + 2, i + 2) = 1.0;
    a(0, 0) = -1.0;
    a(1, 1) = -1.0;
    a(0, last) = a(last, 0) = vanchors(i, 0);
    a(1, last) = a(last, 1) = vanchors(i, 1);
    cp.eq_mats.push_back(a);
  }
  cp.eq_rhs.resize(k + 1);
  cp.eq_rhs(0) = 1.0;
  for (int i = 0; i < k; ++i) cp.eq_rhs(i + 1) = vanchors.row(i).squaredNorm();

  std::vector<double> hs;
  // t_i >= 0.
  for (int i = 0; i < k; ++i) {
    MatX g = MatX::Zero(n, n);
    g(i + 2, last) = -0.5;
    g(last, i + 2) = -0.5;
    cp.ineq_mats.push_back(g);
    hs.push_back(0.0);
  }
  // Triangle tightenings per anchor pair.
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const double d = p.dist(i, j) / ell;
      MatX g1 = MatX::Zero(n, n);
      g1(i + 2, i + 2) = 1.0;
      g1(j + 2, j + 2) = 1.0;
      g1(i + 2, j + 2) = -1.0;
      g1(j + 2, i + 2) = -1.0;
      cp.ineq_mats.push_back(g1);
      hs.push_back(d * d);

      MatX g2 = MatX::Zero(n, n);
      g2(i + 2, last) = -0.5;
      g2(last, i + 2) = -0.5;
      g2(j + 2, last) = -0.5;
      g2(last, j + 2) = -0.5;
      cp.ineq_mats.push_back(g2);
      hs.push_back(-d);
    }
  }
  cp.ineq_rhs = Eigen::Map<VecX>(hs.data(), static_cast<Eigen::Index>(hs.size()));
  return cp;
}

Estimate2D solve_sdr(const SdrProblem& p, const SdrOptions& opts) {
  const sdp::ConicProgram cp = sdr_conic_program(p);
  sdp::SolveOptions solver_opts = opts.solver;
  solver_opts.low_rank_bias = true;  // the exact relaxation is rank one
  if (solver_opts.low_rank_merit_ceiling == 0.0)
    solver_opts.low_rank_merit_ceiling = 1e-9;
  const sdp::ConicSolution sol = sdp::solve(cp, solver_opts);
  // Tolerances tighter than the engine contract are opportunistic; the
  // result is rejected only when it misses the contract.
  const double required = std::max(opts.solver.tol, 1e-7);
  const bool acceptable = sol.status == sdp::SolveStatus::Optimal ||
                          (sol.status == sdp::SolveStatus::MaxIters &&
                           sol.residuals.primal <= required &&
                           sol.residuals.dual <= required &&
                           sol.residuals.gap <= required);
  if (!acceptable)
    throw SolverFailed(std::string("solve_sdr: conic solve ended with status ") +
                       sdp::to_string(sol.status) + " (primal " +
                       std::to_string(sol.residuals.primal) + ", dual " +
                       std::to_string(sol.residuals.dual) + ", gap " +
                       std::to_string(sol.residuals.gap) + ")");
  const int last = p.dim - 1;
  const double ell = sdr_length_scale(p);
  Estimate2D e;
  e.xy = ell * Vec2(sol.Z(0, last), sol.Z(1, last));
  e.objective = rls_cost_va(p.vanchors, p.weights, p.ranges, e.xy);
  e.iterations = sol.iterations;
  Eigen::SelfAdjointEigenSolver<MatX> es(sol.Z, Eigen::EigenvaluesOnly);
  const VecX ev = es.eigenvalues();  // ascending
  const double l1 = ev(last);
  const double l2 = ev(last - 1);
  e.sdp_rank_ratio = (l1 > 0.0) ? std::max(l2, 0.0) / l1 : 1.0;
  return e;
}

}  // namespace diffloc
