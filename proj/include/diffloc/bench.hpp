#pragma once

#include "diffloc/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

// Monte Carlo experiment driver. For every (anchor set, target, SNR, noise
// trial) cell it synthesizes one measurement set, runs every configured
// estimator on that same set, and pools squared errors into one RMSE per
// (estimator, SNR) row. The error bound column is the quadratic mean of the
// per-(anchor set, target) bound so both columns average the same way.

namespace diffloc::bench {

struct EstimatorSpec {
  std::string method;     // gtrs2d usr2d sdr2d spsel-gtrs spsel-usr spsel-sdr dnls msgn
  int nz = 8;             // spsel-* grid size
  int polish_steps = 5;   // spsel-* T
  int seeds_per_dim = 3;  // msgn lattice
  std::string label;      // CSV name; defaulted from method and parameters

  std::string resolved_label() const;
  bool is_2d() const;
};

struct ExperimentConfig {
  std::vector<EstimatorSpec> estimators;
  std::vector<double> snr_db;
  int n_anchor_sets = 1;
  int n_targets = 1;
  int n_noise = 1;
  int num_anchors = 6;  // K
  double L = 15.0;      // box edge = 2L
  double bandwidth_hz = 100e6;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency
  std::string out;  // CSV path; empty = in-memory only
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

struct McRow {
  std::string estimator;
  double snr_db = 0.0;
  int num_anchors = 0;
  double rmse_m = 0.0;
  double peb_m = 0.0;
  double mean_walltime_s = 0.0;  // median over trials; zero unless timed
  long n_trials = 0;
  long n_fail = 0;
};

struct McReport {
  std::vector<McRow> rows;

  const McRow& row(const std::string& label, double snr) const;
};

// RMSE and bound columns only; walltime left at zero.
McReport run_experiment(const ExperimentConfig& cfg);

// Same trial stream with per-estimate wall time collected; the walltime
// column carries the median over trials.
McReport time_estimators(const ExperimentConfig& cfg);

void write_csv(const McReport& report, std::ostream& out);

// Writes the CSV to cfg.out and the resolved config to cfg.out + ".config.json".
void write_outputs(const McReport& report, const ExperimentConfig& cfg);

}  // namespace diffloc::bench
