#pragma once

#include "diffloc/est2d.hpp"
#include "diffloc/scenario.hpp"
#include "diffloc/types.hpp"

#include <optional>
#include <string>
#include <vector>

// 3D estimators for the unified path model: Gauss-Newton refinement, the
// single-start baseline, multi-start over a box lattice, the z-profile, and
// the sample-polish-select pipeline that seeds from fixed-height 2D solves.

namespace diffloc {

enum class Inner { Gtrs, Usr, Sdr, GnTrue };

const char* to_string(Inner inner);
Inner inner_from_string(const std::string& name);

enum class SeedSolver { Gtrs, Usr, Sdr, GnOnly };

const char* to_string(SeedSolver s);

struct GnConfig {
  int polish_steps = 5;  // T
  bool step_halving = false;
  int max_halvings = 8;
  double jitter_base_scale = 1e-12;  // of trace(J' W J), escalated x10
  double jitter_max_scale = 1e-6;
};

// One Gauss-Newton update x + (J'WJ)^{-1} J'W (r - p), with Tikhonov jitter
// escalation when the normal matrix fails to factor.
Vec3 gn_step(const MatX3& anchors, const VecX& weights, const VecX& ranges,
             const Vec3& x, const GnConfig& cfg = {});

struct DnlsConfig {
  int max_iters = 50;
  double step_tol = 1e-9;  // meters
  bool step_halving = false;
  int max_halvings = 8;
  GnConfig gn{};
};

struct Estimate3D {
  Vec3 xyz = Vec3::Zero();
  double objective = 0.0;
  int seed_index = 0;
  SeedSolver solver = SeedSolver::GnOnly;
  int gn_iterations = 0;
};

// Gauss-Newton iteration from a single start until the step norm drops below
// step_tol or the iteration budget runs out. Only locally convergent.
Estimate3D d_nls(const MatX3& anchors, const VecX& weights, const VecX& ranges,
                 const Vec3& init, const DnlsConfig& cfg = {});

// Multi-start Gauss-Newton over a seeds_per_dim^3 lattice spanning the box,
// faces included. Ties break toward the lowest seed index.
Estimate3D ms_gn(const MatX3& anchors, const VecX& weights, const VecX& ranges,
                 const BuildingBox& box, int seeds_per_dim, const DnlsConfig& cfg = {});

struct ZGrid {
  double z_min = 0.0;
  double z_max = 0.0;
  int count = 0;

  static ZGrid uniform(double z_min, double z_max, int count);
  double at(int i) const { return z_min + (z_max - z_min) * i / (count - 1); }
};

struct ProfilePoint {
  double z = 0.0;
  Vec2 xy = Vec2::Zero();
  double j_rls = 0.0;  // exact 3D range-domain cost at [xy, z]
  bool valid = false;
  std::string message;  // inner-solver error when invalid
};

struct ProfileOptions {
  std::optional<Vec2> gn_init;  // required for Inner::GnTrue
  GtrsOptions gtrs{};
  SdrOptions sdr{};
};

// For each grid height, rebuild the virtual anchors, run the chosen inner
// solver, and evaluate the exact 3D cost. Inner failures mark the point
// invalid instead of aborting.
std::vector<ProfilePoint> z_profile(const MatX3& anchors, const VecX& weights,
                                    const VecX& ranges, const ZGrid& grid, Inner inner,
                                    const ProfileOptions& opts = {});

void write_profile_csv(const std::vector<ProfilePoint>& profile, Inner inner,
                       std::ostream& out);

// Seed [xy(z_i), z_i] per grid height, polish each seed with exactly T
// Gauss-Newton iterations on the 3D objective, return the candidate with the
// smallest achieved cost (ties toward the lowest grid index).
Estimate3D sample_polish_select(const MatX3& anchors, const VecX& weights,
                                const VecX& ranges, const ZGrid& grid, Inner inner,
                                const GnConfig& gn_cfg = {},
                                const ProfileOptions& opts = {});

}  // namespace diffloc
