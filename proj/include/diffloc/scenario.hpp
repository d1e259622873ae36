#pragma once

#include "diffloc/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

// Random geometry generation and range synthesis. Targets are sampled
// uniformly inside the building box [0,lx]x[0,ly]x[0,lz]; anchors uniformly in
// the adjacent exterior box [0,lx]x[-ly,0]x[0,lz], rejecting |y_k| < 0.1 m.
// Every random quantity is a pure function of the documented stream keys.

namespace diffloc {

struct BuildingBox {
  double lx = 30.0;
  double ly = 30.0;
  double lz = 30.0;
};

struct Scenario {
  BuildingBox building{};
  MatX3 anchors;  // K x 3
  MatX3 targets;  // N x 3, strictly inside the building box
  std::uint64_t seed = 0;
};

struct ScenarioParams {
  double L = 15.0;  // box edge = 2L (Lx = Ly = Lz = 2L)
  int num_anchors = 6;
  int num_targets = 1;
  std::uint64_t seed = 0;
};

struct NoisePolicy {
  double snr_db = 20.0;
  double bandwidth_hz = 100e6;
  double sigma = 0.0;  // meters, derived from (snr_db, bandwidth_hz)

  static NoisePolicy from_snr(double snr_db, double bandwidth_hz = 100e6);
};

struct MeasurementSet {
  VecX ranges;  // meters, may be negative under noise
  VecX sigmas;  // meters, per anchor
  std::uint64_t trial_seed = 0;
};

// sigma = c / (2 sqrt(2) pi B sqrt(10^(snr/10))). Monotone decreasing in SNR.
double sigma_from_snr(double snr_db, double bandwidth_hz);

MatX3 sample_targets(const BuildingBox& box, int n, std::uint64_t key);
MatX3 sample_anchors(const BuildingBox& box, int k, std::uint64_t key);
Vec3 random_point_in_box(const BuildingBox& box, std::uint64_t key);

// Targets keyed by (seed, "targets"), anchors by (seed, "anchors").
Scenario sample_scenario(const ScenarioParams& params);

void validate(const Scenario& s);

// r_k = p_k + sigma * n_k with n_k standard normal, independent across k.
// Noise stream keyed by (scenario.seed, target_index, trial_seed).
MeasurementSet synthesize_measurements(const Scenario& s, int target_index,
                                       const NoisePolicy& policy,
                                       std::uint64_t trial_seed);

// JSON document: {building:{lx,ly,lz}, anchors:[[x,y,z],...],
// targets:[[x,y,z],...], seed}.
std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);
void save_scenario(const Scenario& s, const std::string& path);
Scenario load_scenario(const std::string& path);

}  // namespace diffloc
