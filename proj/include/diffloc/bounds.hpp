#pragma once

#include "diffloc/geometry.hpp"
#include "diffloc/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

// Fisher information and position error bounds for the unified path model,
// d = 2 (known height) and d = 3. The per-anchor gradient is the path-length
// gradient with respect to the unknown coordinates; in 2D that is the unit
// vector from the virtual anchor to the target.

namespace diffloc {

struct Fim {
  int dim = 0;
  MatX info;  // d x d symmetric PSD
};

struct Peb {
  double value = 0.0;  // meters
};

inline Fim fim_2d(const MatX3& anchors, const VecX& sigmas, const Vec2& target,
                  double z0) {
  check_same_length(anchors.rows(), sigmas.size(), sigmas.size(), "fim_2d");
  Mat2 info = Mat2::Zero();
  for (Eigen::Index k = 0; k < anchors.rows(); ++k) {
    const Vec2 diff = target - virtual_anchor(anchors.row(k), z0);
    const double dist = diff.norm();
    if (dist <= kDegeneracyEps)
      throw DegenerateGeometry("fim_2d: target coincides with a virtual anchor");
    const Vec2 g = diff / dist;
    info.noalias() += (g * g.transpose()) / (sigmas(k) * sigmas(k));
  }
  return {2, info};
}

inline Fim fim_3d(const MatX3& anchors, const VecX& sigmas, const Vec3& target) {
  check_same_length(anchors.rows(), sigmas.size(), sigmas.size(), "fim_3d");
  // Rows of the path-length Jacobian are exactly the gradients g_k.
  const MatX3 jac = jacobian_3d(anchors, target);
  Mat3 info = Mat3::Zero();
  for (Eigen::Index k = 0; k < anchors.rows(); ++k) {
    const Vec3 g = jac.row(k);
    info.noalias() += (g * g.transpose()) / (sigmas(k) * sigmas(k));
  }
  return {3, info};
}

// sqrt(trace(FIM^{-1})), via the eigendecomposition so the condition check
// and the inverse trace share one factorization.
inline Peb peb(const Fim& f) {
  Eigen::SelfAdjointEigenSolver<MatX> es(f.info, Eigen::EigenvaluesOnly);
  const VecX ev = es.eigenvalues();
  const double lmin = ev(0);
  const double lmax = ev(ev.size() - 1);
  if (!(lmin > 0.0) || lmax / lmin > 1e12)
    throw SingularFim("peb: information matrix singular or ill-conditioned");
  return {std::sqrt(ev.cwiseInverse().sum())};
}

}  // namespace diffloc
