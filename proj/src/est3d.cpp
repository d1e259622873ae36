#include "diffloc/est3d.hpp"

#include "diffloc/geometry.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <ostream>

namespace diffloc {

const char* to_string(Inner inner) {
  switch (inner) {
    case Inner::Gtrs: return "gtrs";
    case Inner::Usr: return "usr";
    case Inner::Sdr: return "sdr";
    case Inner::GnTrue: return "gn-true";
  }
  return "unknown";
}

Inner inner_from_string(const std::string& name) {
  if (name == "gtrs") return Inner::Gtrs;
  if (name == "usr") return Inner::Usr;
  if (name == "sdr") return Inner::Sdr;
  if (name == "gn-true") return Inner::GnTrue;
  throw InvalidArgument("unknown inner solver: " + name);
}

const char* to_string(SeedSolver s) {
  switch (s) {
    case SeedSolver::Gtrs: return "GTRS";
    case SeedSolver::Usr: return "USR";
    case SeedSolver::Sdr: return "SDR";
    case SeedSolver::GnOnly: return "GN-only";
  }
  return "unknown";
}

namespace {

SeedSolver seed_solver_of(Inner inner) {
  switch (inner) {
    case Inner::Gtrs: return SeedSolver::Gtrs;
    case Inner::Usr: return SeedSolver::Usr;
    case Inner::Sdr: return SeedSolver::Sdr;
    case Inner::GnTrue: return SeedSolver::GnOnly;
  }
  return SeedSolver::GnOnly;
}

// Solve (J'WJ + jitter) d = J'W e with escalating Tikhonov jitter.
Vec3 solve_normal(const Mat3& normal, const Vec3& rhs, const GnConfig& cfg) {
  Eigen::LLT<Mat3> llt(normal);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  const double tr = normal.trace();
  for (double scale = cfg.jitter_base_scale; scale <= cfg.jitter_max_scale;
       scale *= 10.0) {
    Mat3 jittered = normal + scale * tr * Mat3::Identity();
    llt.compute(jittered);
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
  }
  throw SingularNormalMatrix("gn_step: normal matrix not factorizable after jitter");
}

}  // namespace

Vec3 gn_step(const MatX3& anchors, const VecX& weights, const VecX& ranges,
             const Vec3& x, const GnConfig& cfg) {
  check_same_length(anchors.rows(), weights.size(), ranges.size(), "gn_step");
  const MatX3 jac = jacobian_3d(anchors, x);
  const VecX resid = ranges - path_lengths(anchors, x);
  const Mat3 normal = jac.transpose() * weights.asDiagonal() * jac;
  const Vec3 rhs = jac.transpose() * (weights.cwiseProduct(resid));
  return x + solve_normal(normal, rhs, cfg);
}

Estimate3D d_nls(const MatX3& anchors, const VecX& weights, const VecX& ranges,
                 const Vec3& init, const DnlsConfig& cfg) {
  if (!init.allFinite()) throw InvalidArgument("d_nls: non-finite init");
  Vec3 x = init;
  double cost = rls_cost_3d(anchors, weights, ranges, x);
  int iters = 0;
  for (int t = 0; t < cfg.max_iters; ++t) {
    Vec3 x_next = gn_step(anchors, weights, ranges, x, cfg.gn);
    if (cfg.step_halving) {
      Vec3 delta = x_next - x;
      double next_cost = rls_cost_3d(anchors, weights, ranges, x + delta);
      int h = 0;
      while (next_cost > cost && h < cfg.max_halvings) {
        delta *= 0.5;
        next_cost = rls_cost_3d(anchors, weights, ranges, x + delta);
        ++h;
      }
      if (next_cost > cost) break;  // no acceptable step, stop at x
      x_next = x + delta;
      cost = next_cost;
    } else {
      cost = rls_cost_3d(anchors, weights, ranges, x_next);
    }
    const double step = (x_next - x).norm();
    x = x_next;
    ++iters;
    if (step < cfg.step_tol) break;
  }
  Estimate3D e;
  e.xyz = x;
  e.objective = rls_cost_3d(anchors, weights, ranges, x);
  e.solver = SeedSolver::GnOnly;
  e.gn_iterations = iters;
  return e;
}

Estimate3D ms_gn(const MatX3& anchors, const VecX& weights, const VecX& ranges,
                 const BuildingBox& box, int seeds_per_dim, const DnlsConfig& cfg) {
  if (seeds_per_dim < 2) throw InvalidArgument("ms_gn: need seeds_per_dim >= 2");
  const int spd = seeds_per_dim;
  bool have_best = false;
  Estimate3D best;
  std::string failures;
  int seed_index = 0;
  for (int ix = 0; ix < spd; ++ix) {
    for (int iy = 0; iy < spd; ++iy) {
      for (int iz = 0; iz < spd; ++iz, ++seed_index) {
        const Vec3 init(box.lx * ix / (spd - 1), box.ly * iy / (spd - 1),
                        box.lz * iz / (spd - 1));
        try {
          Estimate3D cand = d_nls(anchors, weights, ranges, init, cfg);
          if (!have_best || cand.objective < best.objective) {
            best = cand;
            best.seed_index = seed_index;
            have_best = true;
          }
        } catch (const Error& e) {
          failures += "seed " + std::to_string(seed_index) + ": " + e.what() + "; ";
        }
      }
    }
  }
  if (!have_best) throw AllSeedsFailed("ms_gn: " + failures);
  return best;
}

ZGrid ZGrid::uniform(double z_min, double z_max, int count) {
  if (!(z_min < z_max)) throw InvalidArgument("ZGrid: need z_min < z_max");
  if (count < 2) throw InvalidArgument("ZGrid: need at least 2 heights");
  return {z_min, z_max, count};
}

namespace {

// 2D Gauss-Newton on the fixed-height Euclidean objective, used for the true
// profile. Step halving keeps the iteration descending.
Vec2 gn_polish_2d(const MatX2& vanchors, const VecX& weights, const VecX& ranges,
                  const Vec2& init) {
  Vec2 x = init;
  double cost = rls_cost_va(vanchors, weights, ranges, x);
  for (int t = 0; t < 100; ++t) {
    MatX2 jac(vanchors.rows(), 2);
    VecX resid(vanchors.rows());
    for (Eigen::Index k = 0; k < vanchors.rows(); ++k) {
      const Vec2 diff = x - vanchors.row(k).transpose();
      const double pk = diff.norm();
      if (pk <= kDegeneracyEps)
        throw DegenerateGeometry("gn_polish_2d: target at a virtual anchor");
      jac.row(k) = (diff / pk).transpose();
      resid(k) = ranges(k) - pk;
    }
    const Mat2 normal = jac.transpose() * weights.asDiagonal() * jac;
    const Vec2 rhs = jac.transpose() * (weights.cwiseProduct(resid));
    Eigen::LLT<Mat2> llt(normal);
    if (llt.info() != Eigen::Success)
      throw SingularNormalMatrix("gn_polish_2d: singular normal matrix");
    Vec2 delta = llt.solve(rhs);
    double next = rls_cost_va(vanchors, weights, ranges, x + delta);
    int h = 0;
    while (next > cost && h < 8) {
      delta *= 0.5;
      next = rls_cost_va(vanchors, weights, ranges, x + delta);
      ++h;
    }
    if (next > cost) break;
    x += delta;
    const double step = delta.norm();
    cost = next;
    if (step < 1e-12) break;
  }
  return x;
}

Vec2 solve_inner(const MatX3& anchors, const VecX& weights, const VecX& ranges,
                 double z, Inner inner, const ProfileOptions& opts) {
  const VecX sigmas = weights.array().rsqrt();
  switch (inner) {
    case Inner::Gtrs: {
      const Lifted l = build_lifted(anchors, z, ranges, sigmas);
      return solve_gtrs(l.gtrs, opts.gtrs).xy;
    }
    case Inner::Usr: {
      const Lifted l = build_lifted(anchors, z, ranges, sigmas);
      return solve_usr(l.usr).xy;
    }
    case Inner::Sdr: {
      const SdrProblem p = build_sdr(anchors, z, ranges, sigmas);
      return solve_sdr(p, opts.sdr).xy;
    }
    case Inner::GnTrue: {
      if (!opts.gn_init)
        throw InvalidArgument("z_profile: inner gn-true needs an initial 2D point");
      return gn_polish_2d(virtual_anchors(anchors, z), weights, ranges, *opts.gn_init);
    }
  }
  throw InvalidArgument("solve_inner: unknown inner solver");
}

}  // namespace

std::vector<ProfilePoint> z_profile(const MatX3& anchors, const VecX& weights,
                                    const VecX& ranges, const ZGrid& grid, Inner inner,
                                    const ProfileOptions& opts) {
  check_same_length(anchors.rows(), weights.size(), ranges.size(), "z_profile");
  if (inner == Inner::GnTrue && !opts.gn_init)
    throw InvalidArgument("z_profile: inner gn-true needs an initial 2D point");
  std::vector<ProfilePoint> profile(grid.count);
  for (int i = 0; i < grid.count; ++i) {
    ProfilePoint& pt = profile[i];
    pt.z = grid.at(i);
    try {
      pt.xy = solve_inner(anchors, weights, ranges, pt.z, inner, opts);
      pt.j_rls = rls_cost_3d(anchors, weights, ranges, Vec3(pt.xy.x(), pt.xy.y(), pt.z));
      pt.valid = true;
    } catch (const Error& e) {
      pt.valid = false;
      pt.message = e.what();
      pt.xy = Vec2::Constant(std::numeric_limits<double>::quiet_NaN());
      pt.j_rls = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return profile;
}

void write_profile_csv(const std::vector<ProfilePoint>& profile, Inner inner,
                       std::ostream& out) {
  out << "z,x,y,j_rls,solver,valid\n";
  char line[256];
  for (const ProfilePoint& pt : profile) {
    std::snprintf(line, sizeof(line), "%.10g,%.10g,%.10g,%.10g,%s,%d\n", pt.z,
                  pt.xy.x(), pt.xy.y(), pt.j_rls, to_string(inner), pt.valid ? 1 : 0);
    out << line;
  }
}

Estimate3D sample_polish_select(const MatX3& anchors, const VecX& weights,
                                const VecX& ranges, const ZGrid& grid, Inner inner,
                                const GnConfig& gn_cfg, const ProfileOptions& opts) {
  check_same_length(anchors.rows(), weights.size(), ranges.size(),
                    "sample_polish_select");
  if (anchors.rows() < 4)
    throw TooFewAnchors("sample_polish_select: need K >= 4 for 3D");
  bool have_best = false;
  Estimate3D best;
  std::string failures;
  for (int i = 0; i < grid.count; ++i) {
    const double zi = grid.at(i);
    try {
      const Vec2 xy = solve_inner(anchors, weights, ranges, zi, inner, opts);
      Vec3 x(xy.x(), xy.y(), zi);
      double cost = rls_cost_3d(anchors, weights, ranges, x);
      for (int t = 0; t < gn_cfg.polish_steps; ++t) {
        Vec3 x_next = gn_step(anchors, weights, ranges, x, gn_cfg);
        if (gn_cfg.step_halving) {
          Vec3 delta = x_next - x;
          double next = rls_cost_3d(anchors, weights, ranges, x + delta);
          int h = 0;
          while (next > cost && h < gn_cfg.max_halvings) {
            delta *= 0.5;
            next = rls_cost_3d(anchors, weights, ranges, x + delta);
            ++h;
          }
          x_next = (next > cost) ? x : (x + delta).eval();
          cost = std::min(cost, next);
        } else {
          cost = rls_cost_3d(anchors, weights, ranges, x_next);
        }
        x = x_next;
      }
      const double j = rls_cost_3d(anchors, weights, ranges, x);
      if (!have_best || j < best.objective) {
        best.xyz = x;
        best.objective = j;
        best.seed_index = i;
        best.solver = seed_solver_of(inner);
        best.gn_iterations = gn_cfg.polish_steps;
        have_best = true;
      }
    } catch (const Error& e) {
      failures += "z[" + std::to_string(i) + "]=" + std::to_string(zi) + ": " +
                  e.what() + "; ";
    }
  }
  if (!have_best) throw AllSeedsFailed("sample_polish_select: " + failures);
  return best;
}

}  // namespace diffloc
