#pragma once

#include "diffloc/types.hpp"

#include <iosfwd>
#include <vector>

// Dense semidefinite programming for small problems (n <= 64):
//
//   minimize    <C, Z> + c0
//   subject to  <A_i, Z>  = b_i          i = 1..m_eq
//               <G_j, Z> <= h_j          j = 1..m_ineq
//               Z PSD.
//
// Inequalities get nonnegative scalar slacks; the combined cone (PSD block
// plus nonnegative orthant) is handled by an infeasible-start primal-dual
// interior-point method with Nesterov-Todd scaling and a Mehrotra-style
// adaptive centering parameter. Dense factorizations throughout. The solver
// is deterministic: identical inputs produce bit-identical iterates.

namespace diffloc::sdp {

struct ConicProgram {
  int n = 0;    // PSD block dimension
  MatX C;       // symmetric cost matrix
  double c0 = 0.0;
  std::vector<MatX> eq_mats;    // symmetric A_i
  VecX eq_rhs;                  // b_i
  std::vector<MatX> ineq_mats;  // symmetric G_j
  VecX ineq_rhs;                // h_j
};

enum class SolveStatus { Optimal, MaxIters, Infeasible };

const char* to_string(SolveStatus s);

struct Residuals {
  double primal = 0.0;  // max_i |<A_i,Z> - b_i| / (1 + |b_i|), incl. slacked rows
  double dual = 0.0;    // scaled dual residual
  double gap = 0.0;     // |pobj - dobj| / (1 + |pobj| + |dobj|)
};

struct IterateLog {
  double primal_res = 0.0;
  double dual_res = 0.0;
  double gap = 0.0;
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  double mu = 0.0;
};

struct ConicSolution {
  MatX Z;
  VecX slacks;  // one per inequality
  VecX y;       // multipliers, equalities first
  SolveStatus status = SolveStatus::MaxIters;
  Residuals residuals{};
  double objective = 0.0;  // <C,Z> + c0
  int iterations = 0;
  std::vector<IterateLog> trace;
};

struct SolveOptions {
  double tol = 1e-7;
  int max_iters = 500;
  double step_fraction = 0.98;  // fraction of the distance to the cone boundary
  bool keep_trace = true;
  // Among iterates and path extrapolants whose worst residual stays below
  // max(tol, low_rank_merit_ceiling), prefer the one with the smallest second
  // eigenvalue. Useful for relaxations whose optimum is known to be rank one;
  // such problems lose strict complementarity, and on-path iterates carry an
  // O(sqrt(mu)) spread across the degenerate subspace that this tie-break
  // removes. The ceiling lets a caller drive the path deeper than the
  // accuracy it needs and still harvest the flattest candidate.
  bool low_rank_bias = false;
  double low_rank_merit_ceiling = 0.0;
};

ConicSolution solve(const ConicProgram& p, const SolveOptions& opts = {});

// Plain-text sparse triplet dump for debugging (format documented in the
// README): one "block row col value" line per upper-triangle nonzero.
void dump_triplets(const ConicProgram& p, std::ostream& out);

}  // namespace diffloc::sdp
