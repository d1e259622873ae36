#include "diffloc/sdp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace diffloc::sdp {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIters: return "max_iters";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

namespace {

// The iteration runs in double for ordinary tolerances and in long double for
// tight ones: near-degenerate instances (noiseless data, rank-one optima) hit
// the double roundoff floor around a 1e-9 gap, and the extended mantissa buys
// the extra digits the tight contracts need.

template <typename Real>
using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using VecR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

// Upper-triangle sparse view of one symmetric constraint matrix.
template <typename Real>
struct SparseSym {
  std::vector<int> rows, cols;  // rows[k] <= cols[k]
  std::vector<Real> vals;
  Real norm = 0;  // Frobenius norm of the full symmetric matrix

  void from_dense(const MatX& a, int n, const char* what) {
    if (a.rows() != n || a.cols() != n)
      throw InvalidArgument(std::string("sdp: ") + what + " has wrong dimension");
    Real sq = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        const double v = a(i, j);
        if (std::abs(v - a(j, i)) > 1e-12 * (1.0 + std::abs(v)))
          throw InvalidArgument(std::string("sdp: ") + what + " is not symmetric");
        if (v != 0.0) {
          rows.push_back(i);
          cols.push_back(j);
          vals.push_back(Real(v));
          sq += Real((i == j) ? v * v : 2.0 * v * v);
        }
      }
    }
    norm = std::sqrt(sq);
  }

  Real inner(const MatR<Real>& m) const {
    Real acc = 0;
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const Real mij = m(rows[k], cols[k]);
      acc += (rows[k] == cols[k]) ? vals[k] * mij : Real(2) * vals[k] * mij;
    }
    return acc;
  }

  void add_to(MatR<Real>& m, Real scale) const {
    for (std::size_t k = 0; k < vals.size(); ++k) {
      m(rows[k], cols[k]) += scale * vals[k];
      if (rows[k] != cols[k]) m(cols[k], rows[k]) += scale * vals[k];
    }
  }

  // accum += scale * W A W for this constraint A.
  void sandwich(const MatR<Real>& w, MatR<Real>& accum, Real scale) const {
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const Real v = scale * vals[k];
      const auto wi = w.col(rows[k]);
      const auto wj = w.col(cols[k]);
      if (rows[k] == cols[k]) {
        accum.noalias() += v * (wi * wi.transpose());
      } else {
        accum.noalias() += v * (wi * wj.transpose());
        accum.noalias() += v * (wj * wi.transpose());
      }
    }
  }
};

// Largest alpha in (0, 1] with X + alpha*D staying in the cone, given the
// Cholesky factor of X. Returns > 1 when the full step stays inside.
template <typename Real>
Real psd_boundary_step(const Eigen::LLT<MatR<Real>>& llt_x, const MatR<Real>& d) {
  MatR<Real> y = llt_x.matrixL().solve(d);
  y = llt_x.matrixL().solve(y.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<MatR<Real>> es(
      ((y + y.transpose()) / Real(2)).eval(), Eigen::EigenvaluesOnly);
  const Real lmin = es.eigenvalues().minCoeff();
  if (lmin >= 0) return std::numeric_limits<Real>::infinity();
  return Real(-1) / lmin;
}

template <typename Real>
Real lp_boundary_step(const VecR<Real>& x, const VecR<Real>& d) {
  Real a = std::numeric_limits<Real>::infinity();
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (d(i) < 0) a = std::min(a, -x(i) / d(i));
  return a;
}

template <typename Real>
ConicSolution solve_impl(const ConicProgram& prog, const SolveOptions& opts) {
  const int n = prog.n;
  if (n < 1 || n > 64) throw InvalidArgument("sdp: PSD dimension must be in [1, 64]");
  const int m_eq = static_cast<int>(prog.eq_mats.size());
  const int p = static_cast<int>(prog.ineq_mats.size());
  const int m = m_eq + p;
  if (m < 1) throw InvalidArgument("sdp: need at least one constraint");
  if (m > 5000) throw InvalidArgument("sdp: too many constraints");
  if (prog.eq_rhs.size() != m_eq || prog.ineq_rhs.size() != p)
    throw InvalidArgument("sdp: rhs length mismatch");

  SparseSym<Real> cost;
  cost.from_dense(prog.C, n, "C");
  std::vector<SparseSym<Real>> rows(m);
  VecR<Real> rhs(m);
  for (int i = 0; i < m_eq; ++i) {
    rows[i].from_dense(prog.eq_mats[i], n, "A_i");
    rhs(i) = Real(prog.eq_rhs(i));
  }
  for (int j = 0; j < p; ++j) {
    rows[m_eq + j].from_dense(prog.ineq_mats[j], n, "G_j");
    rhs(m_eq + j) = Real(prog.ineq_rhs(j));
  }

  const Real c0 = Real(prog.c0);
  const Real cost_scale = Real(1) + cost.norm;
  const Real tol = Real(opts.tol);
  const Real step_fraction = Real(opts.step_fraction);

  // Initial point: identity blocks sized from the data magnitudes.
  Real xi_p = 1;
  for (int i = 0; i < m; ++i)
    xi_p = std::max(xi_p, std::abs(rhs(i)) / (Real(1) + rows[i].norm));
  const Real xi_d = std::max(Real(1), cost.norm / std::sqrt(Real(n)));

  MatR<Real> X = xi_p * MatR<Real>::Identity(n, n);
  MatR<Real> S = xi_d * MatR<Real>::Identity(n, n);
  VecR<Real> y = VecR<Real>::Zero(m);
  VecR<Real> s_lp = VecR<Real>::Constant(p, xi_p);
  VecR<Real> v_lp = VecR<Real>::Constant(p, xi_d);

  const int ncone = n + p;
  const Real mu0 = (Real(n) * xi_p * xi_d + s_lp.dot(v_lp)) / Real(ncone);

  ConicSolution sol;
  sol.trace.reserve(opts.keep_trace ? 64 : 0);

  MatR<Real> rd(n, n), rc(n, n), w(n, n), sinv(n, n), dx(n, n), ds(n, n);
  std::vector<MatR<Real>> wad(m, MatR<Real>(n, n));  // W A_i W per row
  MatR<Real> schur(m, m);
  VecR<Real> rp(m), rd_lp(p), rc_lp(p), srhs(m), dy(m), dv_lp(p), ds_lp(p);
  VecR<Real> dy_aff(m), ds_lp_aff(p), dv_lp_aff(p);
  MatR<Real> dx_aff(n, n), ds_aff(n, n);
  MatR<Real> MatX_tmp(n, n), MatX_tmp2(n, n);
  MatR<Real> err_rd(n, n), err_rc(n, n), corr_dx(n, n), corr_ds(n, n);
  VecR<Real> err_rp(m), err_rd_lp(p), err_rc_lp(p);
  VecR<Real> corr_dy(m), corr_ds_lp(p), corr_dv_lp(p);

  struct Scalars {
    Real primal, dual, gap, pobj, dobj;
  };
  auto compute_residuals = [&]() -> Scalars {
    Scalars r;
    for (int i = 0; i < m; ++i) {
      rp(i) = rhs(i) - rows[i].inner(X);
      if (i >= m_eq) rp(i) -= s_lp(i - m_eq);
    }
    rd = -S;
    cost.add_to(rd, Real(1));
    for (int i = 0; i < m; ++i) rows[i].add_to(rd, -y(i));
    for (int j = 0; j < p; ++j) rd_lp(j) = -y(m_eq + j) - v_lp(j);

    r.primal = 0;
    for (int i = 0; i < m; ++i)
      r.primal = std::max(r.primal, std::abs(rp(i)) / (Real(1) + std::abs(rhs(i))));
    r.dual = rd.norm() / cost_scale;
    for (int j = 0; j < p; ++j) r.dual = std::max(r.dual, std::abs(rd_lp(j)));
    r.pobj = cost.inner(X) + c0;
    r.dobj = rhs.dot(y) + c0;
    r.gap = std::abs(r.pobj - r.dobj) / (Real(1) + std::abs(r.pobj) + std::abs(r.dobj));
    return r;
  };

  // Best iterate by worst residual, returned when the iteration stalls short
  // of the tolerance.
  Real best_merit = std::numeric_limits<Real>::infinity();
  MatR<Real> best_X = X, best_S = S;
  VecR<Real> best_y = y, best_s = s_lp, best_v = v_lp;

  // Best full-affine extrapolation candidate. Near degenerate optima the
  // central path approaches the solution like sqrt(mu), and the full
  // predictor step cancels the leading offset; the candidate is kept only
  // while it stays feasible and no worse than -tol outside the cone.
  Real ext_merit = std::numeric_limits<Real>::infinity();
  MatR<Real> ext_X, ext_S;
  VecR<Real> ext_y, ext_s, ext_v;

  // Candidate pool for the low-rank tie-break; judged at the end against the
  // best achieved merit.
  struct Cand {
    Real lambda2, merit;
    MatR<Real> X, S;
    VecR<Real> y, s, v;
  };
  std::vector<Cand> cands;

  // Tail snapshots for Richardson combination along the central path: with
  // strict complementarity failing, iterates approach the optimum like
  // sqrt(mu), and an affine pairing of two path points cancels that term.
  struct Snap {
    MatR<Real> X, S;
    VecR<Real> y, s, v;
    Real mu;
  };
  std::vector<Snap> tail;

  auto consider_extrapolation = [&](const MatR<Real>& cand_X, const VecR<Real>& cand_s,
                                    const MatR<Real>& cand_S, const VecR<Real>& cand_y,
                                    const VecR<Real>& cand_v) {
    Eigen::SelfAdjointEigenSolver<MatR<Real>> es(cand_X, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol) return;
    const Real lambda2 = n >= 2 ? es.eigenvalues()(n - 2) : Real(0);
    Real eq_res = 0, ineq_viol = 0, dual_res = 0;
    for (int i = 0; i < m_eq; ++i)
      eq_res = std::max(eq_res, std::abs(rows[i].inner(cand_X) - rhs(i)) /
                                    (Real(1) + std::abs(rhs(i))));
    for (int j = 0; j < p; ++j)
      ineq_viol = std::max(ineq_viol, (rows[m_eq + j].inner(cand_X) - rhs(m_eq + j)) /
                                          (Real(1) + std::abs(rhs(m_eq + j))));
    MatR<Real> rd_cand = -cand_S;
    cost.add_to(rd_cand, Real(1));
    for (int i = 0; i < m; ++i) rows[i].add_to(rd_cand, -cand_y(i));
    dual_res = rd_cand.norm() / cost_scale;
    Eigen::SelfAdjointEigenSolver<MatR<Real>> esd(cand_S, Eigen::EigenvaluesOnly);
    dual_res = std::max(dual_res, -esd.eigenvalues().minCoeff());
    for (int j = 0; j < p; ++j) dual_res = std::max(dual_res, cand_y(m_eq + j));
    const Real po = cost.inner(cand_X) + c0;
    const Real dobj = rhs.dot(cand_y) + c0;
    const Real gap = std::abs(po - dobj) / (Real(1) + std::abs(po) + std::abs(dobj));
    const Real merit = std::max({eq_res, ineq_viol, dual_res, gap});
    if (merit < ext_merit) {
      ext_merit = merit;
      ext_X = cand_X;
      ext_s = cand_s;
      ext_S = cand_S;
      ext_y = cand_y;
      ext_v = cand_v;
    }
    if (opts.low_rank_bias) {
      if (cands.size() >= 64) {
        auto worst = std::max_element(
            cands.begin(), cands.end(),
            [](const Cand& a, const Cand& b) { return a.lambda2 < b.lambda2; });
        if (worst->lambda2 <= lambda2) return;
        cands.erase(worst);
      }
      cands.push_back({lambda2, merit, cand_X, cand_S, cand_y, cand_s, cand_v});
    }
  };

  int stall = 0;
  int it = 0;
  Scalars res{};
  bool converged = false;
  bool diverged = false;
  Real prev_min_step = 1;

  for (it = 0; it < opts.max_iters; ++it) {
    res = compute_residuals();
    const Real mu = (X.cwiseProduct(S).sum() + s_lp.dot(v_lp)) / Real(ncone);

    if (opts.keep_trace)
      sol.trace.push_back({double(res.primal), double(res.dual), double(res.gap),
                           double(res.pobj), double(res.dobj), double(mu)});

    const Real merit = std::max({res.primal, res.dual, res.gap});
    if (merit < best_merit) {
      best_merit = merit;
      best_X = X;
      best_S = S;
      best_y = y;
      best_s = s_lp;
      best_v = v_lp;
    }

    if (res.primal <= tol && res.dual <= tol && res.gap <= tol) {
      converged = true;
      break;
    }
    if (y.template lpNorm<Eigen::Infinity>() > Real(1e14) ||
        mu > Real(1e14) * std::max(mu0, Real(1))) {
      diverged = true;
      break;
    }

    if (mu < Real(1e-5) * mu0 && res.primal < std::sqrt(tol)) {
      tail.push_back({X, S, y, s_lp, v_lp, mu});
      if (tail.size() > 12) tail.erase(tail.begin());
    }

    Eigen::LLT<MatR<Real>> llt_x(X), llt_s(S);
    if (llt_x.info() != Eigen::Success || llt_s.info() != Eigen::Success) {
      if (it == 0) throw NumericalBreakdown("sdp: initial iterate left the cone");
      break;  // terminal roundoff; fall back to the best iterate
    }

    // Nesterov-Todd scaling point W with W S W = X.
    {
      MatR<Real> lx = llt_x.matrixL();
      MatR<Real> ls = llt_s.matrixL();
      Eigen::JacobiSVD<MatR<Real>> svd(ls.transpose() * lx,
                                       Eigen::ComputeFullU | Eigen::ComputeFullV);
      MatR<Real> g = lx * svd.matrixV() *
                     svd.singularValues().cwiseSqrt().cwiseInverse().asDiagonal();
      w.noalias() = g * g.transpose();
    }
    sinv = llt_s.solve(MatR<Real>::Identity(n, n));

    // Schur complement of the reduced normal equations.
    for (int i = 0; i < m; ++i) {
      wad[i].setZero();
      rows[i].sandwich(w, wad[i], Real(1));
    }
    for (int i = 0; i < m; ++i) {
      for (int j = i; j < m; ++j) {
        schur(i, j) = rows[i].inner(wad[j]);
        schur(j, i) = schur(i, j);
      }
    }
    for (int j = 0; j < p; ++j) schur(m_eq + j, m_eq + j) += s_lp(j) / v_lp(j);

    Eigen::LDLT<MatR<Real>> fact(schur);
    if (fact.info() != Eigen::Success) {
      MatR<Real> reg =
          schur + (Real(1e-13) * (Real(1) + schur.trace() / Real(m))) *
                      MatR<Real>::Identity(m, m);
      fact.compute(reg);
      if (fact.info() != Eigen::Success)
        throw NumericalBreakdown("sdp: Schur factorization failed");
    }

    // Newton solve for a given complementarity target, with primal and dual
    // residuals (rp, rd, rd_lp) fixed for the iteration. One round of
    // iterative refinement against the full KKT system keeps the recovered
    // directions accurate when the Schur complement turns ill-conditioned
    // near a degenerate optimum.
    auto solve_direction = [&](const MatR<Real>& rc_psd, const VecR<Real>& rc_lp_vec,
                               VecR<Real>& dy_out, MatR<Real>& dx_out,
                               MatR<Real>& ds_out, VecR<Real>& ds_lp_out,
                               VecR<Real>& dv_lp_out) {
      auto reduce_rhs = [&](const VecR<Real>& rp_in, const MatR<Real>& rd_in,
                            const VecR<Real>& rd_lp_in, const MatR<Real>& rc_in,
                            const VecR<Real>& rc_lp_in, VecR<Real>& out) {
        MatX_tmp.noalias() = w * rd_in;
        MatX_tmp2.noalias() = MatX_tmp * w;  // W rd W
        for (int i = 0; i < m; ++i) {
          out(i) = rp_in(i) - rows[i].inner(rc_in) + rows[i].inner(MatX_tmp2);
          if (i >= m_eq) {
            const int j = i - m_eq;
            out(i) -= rc_lp_in(j) - (s_lp(j) / v_lp(j)) * rd_lp_in(j);
          }
        }
      };
      auto expand = [&](const VecR<Real>& dy_in, const MatR<Real>& rd_in,
                        const VecR<Real>& rd_lp_in, const MatR<Real>& rc_in,
                        const VecR<Real>& rc_lp_in, MatR<Real>& dx_o, MatR<Real>& ds_o,
                        VecR<Real>& ds_lp_o, VecR<Real>& dv_lp_o) {
        ds_o = rd_in;
        for (int i = 0; i < m; ++i) rows[i].add_to(ds_o, -dy_in(i));
        MatX_tmp.noalias() = w * ds_o;
        dx_o.noalias() = -(MatX_tmp * w);
        dx_o += rc_in;
        dx_o = ((dx_o + dx_o.transpose()) / Real(2)).eval();
        for (int j = 0; j < p; ++j) {
          dv_lp_o(j) = rd_lp_in(j) - dy_in(m_eq + j);
          ds_lp_o(j) = rc_lp_in(j) - (s_lp(j) / v_lp(j)) * dv_lp_o(j);
        }
      };

      reduce_rhs(rp, rd, rd_lp, rc_psd, rc_lp_vec, srhs);
      dy_out = fact.solve(srhs);
      dy_out += fact.solve(
          (srhs - schur.template selfadjointView<Eigen::Lower>() * dy_out).eval());
      expand(dy_out, rd, rd_lp, rc_psd, rc_lp_vec, dx_out, ds_out, ds_lp_out,
             dv_lp_out);

      // Residuals of the full Newton system, then one correction pass.
      for (int i = 0; i < m; ++i) {
        err_rp(i) = rp(i) - rows[i].inner(dx_out);
        if (i >= m_eq) err_rp(i) -= ds_lp_out(i - m_eq);
      }
      err_rd = rd - ds_out;
      for (int i = 0; i < m; ++i) rows[i].add_to(err_rd, -dy_out(i));
      {
        MatX_tmp.noalias() = w * ds_out;
        err_rc.noalias() = -(MatX_tmp * w);
        err_rc += rc_psd - dx_out;
        err_rc = ((err_rc + err_rc.transpose()) / Real(2)).eval();
      }
      for (int j = 0; j < p; ++j) {
        err_rd_lp(j) = rd_lp(j) - dy_out(m_eq + j) - dv_lp_out(j);
        err_rc_lp(j) =
            rc_lp_vec(j) - ds_lp_out(j) - (s_lp(j) / v_lp(j)) * dv_lp_out(j);
      }
      reduce_rhs(err_rp, err_rd, err_rd_lp, err_rc, err_rc_lp, srhs);
      corr_dy = fact.solve(srhs);
      expand(corr_dy, err_rd, err_rd_lp, err_rc, err_rc_lp, corr_dx, corr_ds,
             corr_ds_lp, corr_dv_lp);
      dy_out += corr_dy;
      dx_out += corr_dx;
      ds_out += corr_ds;
      ds_lp_out += corr_ds_lp;
      dv_lp_out += corr_dv_lp;
    };

    // Predictor: pure Newton step toward complementarity zero.
    rc = -X;
    rc_lp = -s_lp;
    solve_direction(rc, rc_lp, dy_aff, dx_aff, ds_aff, ds_lp_aff, dv_lp_aff);

    // The full (untruncated) predictor step is a Richardson-style candidate.
    if (mu < Real(1e-6) * mu0)
      consider_extrapolation(X + dx_aff, s_lp + ds_lp_aff, S + ds_aff, y + dy_aff,
                             v_lp + dv_lp_aff);

    Real ap = std::min(Real(1), psd_boundary_step<Real>(llt_x, dx_aff));
    ap = std::min(ap, lp_boundary_step<Real>(s_lp, ds_lp_aff));
    Real ad = std::min(Real(1), psd_boundary_step<Real>(llt_s, ds_aff));
    ad = std::min(ad, lp_boundary_step<Real>(v_lp, dv_lp_aff));

    const Real mu_aff =
        (((X + ap * dx_aff).cwiseProduct(S + ad * ds_aff)).sum() +
         (s_lp + ap * ds_lp_aff).dot(v_lp + ad * dv_lp_aff)) /
        Real(ncone);
    const Real ratio = std::clamp(mu_aff / mu, Real(0), Real(1));
    Real sigma = ratio * ratio * ratio;
    // After a short-step iteration, recenter before pushing again; harder in
    // the endgame where degenerate instances need a tight neighborhood.
    if (mu < Real(1e-6) * mu0) {
      if (prev_min_step < Real(0.25)) sigma = std::max(sigma, Real(0.99));
    } else if (prev_min_step < Real(0.05)) {
      sigma = std::max(sigma, Real(0.9));
    }

    // Corrector with adaptive centering and the Mehrotra second-order term
    // sym(dX dS S^{-1}) (scalar analogue: ds dv / v). The term is weighted by
    // the achieved affine steps so it fades out when the predictor is poor.
    const Real corr_w = ap * ad;
    {
      MatR<Real> soc = (corr_w / Real(2)) * (dx_aff * (ds_aff * sinv));
      rc = sigma * mu * sinv - X - (soc + soc.transpose());
    }
    for (int j = 0; j < p; ++j)
      rc_lp(j) = sigma * mu / v_lp(j) - s_lp(j) -
                 corr_w * ds_lp_aff(j) * dv_lp_aff(j) / v_lp(j);
    solve_direction(rc, rc_lp, dy, dx, ds, ds_lp, dv_lp);

    ap = std::min(Real(1), step_fraction * psd_boundary_step<Real>(llt_x, dx));
    ap = std::min(ap, step_fraction * lp_boundary_step<Real>(s_lp, ds_lp));
    ad = std::min(Real(1), step_fraction * psd_boundary_step<Real>(llt_s, ds));
    ad = std::min(ad, step_fraction * lp_boundary_step<Real>(v_lp, dv_lp));
    // Symmetric steps in the tail keep the iterate centered when strict
    // complementarity fails.
    if (mu < Real(1e-4) * mu0) ap = ad = std::min(ap, ad);
    prev_min_step = std::min(ap, ad);

    X.noalias() += ap * dx;
    s_lp += ap * ds_lp;
    S.noalias() += ad * ds;
    v_lp += ad * dv_lp;
    y += ad * dy;

    if (ap < Real(1e-10) && ad < Real(1e-10)) {
      if (++stall >= 15) {
        ++it;
        break;
      }
    } else {
      stall = 0;
    }
  }

  if (!converged) {
    // Report the best iterate seen.
    X = best_X;
    S = best_S;
    y = best_y;
    s_lp = best_s;
    v_lp = best_v;
    res = compute_residuals();
  }
  // Pairwise path extrapolation from the deepest tail snapshot.
  if (tail.size() >= 2) {
    const Snap& fin = tail.back();
    const Real sf = std::sqrt(fin.mu);
    for (std::size_t i = 0; i + 1 < tail.size(); ++i) {
      const Snap& early = tail[i];
      if (early.mu < Real(4) * fin.mu) continue;
      const Real se = std::sqrt(early.mu);
      const Real a = se / (se - sf);
      const Real b = -sf / (se - sf);
      consider_extrapolation(a * fin.X + b * early.X, a * fin.s + b * early.s,
                             a * fin.S + b * early.S, a * fin.y + b * early.y,
                             a * fin.v + b * early.v);
    }
  }
  // Let the settled iterate compete in the same candidate pool, then pick:
  // the low-rank winner among candidates near the achieved merit floor when
  // requested, otherwise the best merit.
  consider_extrapolation(X, s_lp, S, y, v_lp);
  const Real interior_merit = std::max({res.primal, res.dual, res.gap});
  const Cand* pick = nullptr;
  if (opts.low_rank_bias) {
    const Real thr =
        std::max({tol, Real(4) * std::min(ext_merit, interior_merit),
                  Real(opts.low_rank_merit_ceiling)});
    for (const Cand& c : cands)
      if (c.merit <= thr && (!pick || c.lambda2 < pick->lambda2)) pick = &c;
  }
  if (pick) {
    X = pick->X;
    S = pick->S;
    y = pick->y;
    s_lp = pick->s;
    v_lp = pick->v;
    res = compute_residuals();
    converged = res.primal <= tol && res.dual <= tol && res.gap <= tol;
  } else if (ext_merit < interior_merit) {
    X = ext_X;
    S = ext_S;
    y = ext_y;
    s_lp = ext_s;
    v_lp = ext_v;
    res = compute_residuals();
    converged = res.primal <= tol && res.dual <= tol && res.gap <= tol;
  }

  sol.Z = X.template cast<double>();
  sol.slacks = s_lp.template cast<double>();
  sol.y = y.template cast<double>();
  sol.residuals = {double(res.primal), double(res.dual), double(res.gap)};
  sol.objective = double(res.pobj);
  sol.iterations = it;
  const Real mu_end = (X.cwiseProduct(S).sum() + s_lp.dot(v_lp)) / Real(ncone);
  if (converged || (res.primal <= tol && res.dual <= tol && res.gap <= tol)) {
    sol.status = SolveStatus::Optimal;
  } else if (res.primal > std::sqrt(tol) &&
             (diverged || mu_end < Real(1e-6) * mu0 ||
              mu_end > Real(1e13) * std::max(mu0, Real(1)) ||
              y.template lpNorm<Eigen::Infinity>() > Real(1e13))) {
    // Complementarity collapsed or diverged while the primal residual stayed
    // large: no feasible point in reach.
    sol.status = SolveStatus::Infeasible;
  } else {
    sol.status = SolveStatus::MaxIters;
  }
  return sol;
}

}  // namespace

ConicSolution solve(const ConicProgram& p, const SolveOptions& opts) {
  // Tight tolerances run in extended precision; the double floor near
  // degenerate optima sits around a 1e-9 gap.
  if (opts.tol < 1e-7) return solve_impl<long double>(p, opts);
  return solve_impl<double>(p, opts);
}

void dump_triplets(const ConicProgram& p, std::ostream& out) {
  out << "n " << p.n << "\n";
  out << "c0 " << p.c0 << "\n";
  auto dump_mat = [&](const char* tag, int idx, const MatX& a) {
    for (int i = 0; i < p.n; ++i)
      for (int j = i; j < p.n; ++j)
        if (a(i, j) != 0.0) {
          out << tag;
          if (idx >= 0) out << " " << idx;
          out << " " << i << " " << j << " " << a(i, j) << "\n";
        }
  };
  dump_mat("obj", -1, p.C);
  for (std::size_t k = 0; k < p.eq_mats.size(); ++k) {
    dump_mat("eq", static_cast<int>(k), p.eq_mats[k]);
    out << "eqrhs " << k << " " << p.eq_rhs(k) << "\n";
  }
  for (std::size_t k = 0; k < p.ineq_mats.size(); ++k) {
    dump_mat("ineq", static_cast<int>(k), p.ineq_mats[k]);
    out << "ineqrhs " << k << " " << p.ineq_rhs(k) << "\n";
  }
}

}  // namespace diffloc::sdp
