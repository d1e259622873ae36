#pragma once

#include "diffloc/types.hpp"

#include <cmath>

// Unified LOS/NLOS path-length model and its derivatives. The path from an
// anchor a_k = [x_k, y_k, z_k] to a target [x, y, z] has length
//
//   p_k = sqrt((x_k - x)^2 + (sqrt(y_k^2 + (z_k - z)^2) + y)^2),
//
// which equals the Euclidean distance when z_k = z (LOS) and the diffraction
// detour otherwise. All functions are pure and thread-safe.

namespace diffloc {

// Distance from the anchor to the z = z0 plane's diffraction axis:
// sqrt(y_k^2 + (z_k - z0)^2).
inline double r_perp(const Vec3& anchor, double z0) {
  const double dz = anchor.z() - z0;
  return std::sqrt(anchor.y() * anchor.y() + dz * dz);
}

inline double path_length(const Vec3& anchor, const Vec3& target) {
  const double dx = anchor.x() - target.x();
  const double b = r_perp(anchor, target.z()) + target.y();
  return std::sqrt(dx * dx + b * b);
}

// Two-coordinate embedding [x_k, -r_perp,k(z0)]. Euclidean distance from any
// planar target [x, y] to this point equals path_length at height z0.
inline Vec2 virtual_anchor(const Vec3& anchor, double z0) {
  return {anchor.x(), -r_perp(anchor, z0)};
}

inline MatX2 virtual_anchors(const MatX3& anchors, double z0) {
  MatX2 va(anchors.rows(), 2);
  for (Eigen::Index k = 0; k < anchors.rows(); ++k)
    va.row(k) = virtual_anchor(anchors.row(k), z0).transpose();
  return va;
}

inline VecX path_lengths(const MatX3& anchors, const Vec3& target) {
  VecX p(anchors.rows());
  for (Eigen::Index k = 0; k < anchors.rows(); ++k)
    p(k) = path_length(anchors.row(k), target);
  return p;
}

inline void check_same_length(Eigen::Index a, Eigen::Index b, Eigen::Index c,
                              const char* where) {
  if (a != b || b != c)
    throw InvalidArgument(std::string(where) + ": anchor/weight/range length mismatch");
}

// Weighted range-domain least-squares cost sum_k w_k (p_k - r_k)^2.
inline double rls_cost_3d(const MatX3& anchors, const VecX& weights,
                          const VecX& ranges, const Vec3& target) {
  check_same_length(anchors.rows(), weights.size(), ranges.size(), "rls_cost_3d");
  double cost = 0.0;
  for (Eigen::Index k = 0; k < anchors.rows(); ++k) {
    const double e = path_length(anchors.row(k), target) - ranges(k);
    cost += weights(k) * e * e;
  }
  return cost;
}

// Fixed-height cost on the virtual-anchor embedding; equals rls_cost_3d at
// target [xy, z0].
inline double rls_cost_2d(const MatX3& anchors, double z0, const VecX& weights,
                          const VecX& ranges, const Vec2& xy) {
  check_same_length(anchors.rows(), weights.size(), ranges.size(), "rls_cost_2d");
  double cost = 0.0;
  for (Eigen::Index k = 0; k < anchors.rows(); ++k) {
    const double e = (xy - virtual_anchor(anchors.row(k), z0)).norm() - ranges(k);
    cost += weights(k) * e * e;
  }
  return cost;
}

inline double rls_cost_va(const MatX2& vanchors, const VecX& weights,
                          const VecX& ranges, const Vec2& xy) {
  double cost = 0.0;
  for (Eigen::Index k = 0; k < vanchors.rows(); ++k) {
    const double e = (xy - vanchors.row(k).transpose()).norm() - ranges(k);
    cost += weights(k) * e * e;
  }
  return cost;
}

// K x 3 Jacobian of the path lengths with respect to the target coordinates.
// Row k is [-a_k/p_k, b_k/p_k, -b_k (z_k - z) / (p_k r_perp,k)] with
// a_k = x_k - x and b_k = r_perp,k + y. Throws DegenerateGeometry when any
// p_k or r_perp,k falls below the guard.
inline MatX3 jacobian_3d(const MatX3& anchors, const Vec3& target) {
  MatX3 jac(anchors.rows(), 3);
  for (Eigen::Index k = 0; k < anchors.rows(); ++k) {
    const Vec3 a = anchors.row(k);
    const double rp = r_perp(a, target.z());
    const double ak = a.x() - target.x();
    const double bk = rp + target.y();
    const double pk = std::sqrt(ak * ak + bk * bk);
    if (pk <= kDegeneracyEps || rp <= kDegeneracyEps)
      throw DegenerateGeometry("jacobian_3d: p_k or r_perp below guard at anchor " +
                               std::to_string(k));
    jac(k, 0) = -ak / pk;
    jac(k, 1) = bk / pk;
    jac(k, 2) = -bk * (a.z() - target.z()) / (pk * rp);
  }
  return jac;
}

inline VecX weights_from_sigmas(const VecX& sigmas) {
  for (Eigen::Index k = 0; k < sigmas.size(); ++k)
    if (!(sigmas(k) > 0.0))
      throw InvalidArgument("weights_from_sigmas: sigma must be positive");
  return sigmas.array().square().inverse();
}

}  // namespace diffloc
