// Command-line front end: scenario generation, single-shot estimation,
// z-profiles, error bounds, and Monte Carlo benchmarks. All numerical work
// lives in the library; this file only wires flags to calls.
//
// Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 I/O error.

#include "diffloc/bench.hpp"
#include "diffloc/bounds.hpp"
#include "diffloc/est2d.hpp"
#include "diffloc/est3d.hpp"
#include "diffloc/geometry.hpp"
#include "diffloc/rng.hpp"
#include "diffloc/scenario.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace diffloc;
using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

struct GenScenarioArgs {
  std::string config;
  std::string out;
  std::optional<double> L;
  std::optional<int> K;
  std::optional<int> n_targets;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_scenario(const GenScenarioArgs& args) {
  ScenarioParams params;
  if (!args.config.empty()) {
    std::ifstream in(args.config);
    if (!in) throw IoError("cannot open config " + args.config);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw UsageError("config is not valid JSON");
    params.L = j.value("L", params.L);
    params.num_anchors = j.value("K", params.num_anchors);
    params.num_targets = j.value("n_targets", params.num_targets);
    params.seed = j.value("seed", params.seed);
  }
  if (args.L) params.L = *args.L;
  if (args.K) params.num_anchors = *args.K;
  if (args.n_targets) params.num_targets = *args.n_targets;
  if (args.seed) params.seed = *args.seed;

  const Scenario s = sample_scenario(params);
  save_scenario(s, args.out);

  ordered_json resolved;
  resolved["L"] = params.L;
  resolved["K"] = params.num_anchors;
  resolved["n_targets"] = params.num_targets;
  resolved["seed"] = params.seed;
  write_text_file(args.out + ".config.json", resolved.dump(2) + "\n");
  return kExitOk;
}

struct EstimateArgs {
  std::string scenario;
  int target_index = 0;
  std::optional<double> snr;
  std::string method;
  std::optional<double> z0;
  int nz = 8;
  int polish_steps = 5;
  int seeds_per_dim = 3;
  std::uint64_t trial_seed = 0;
};

MeasurementSet make_measurements(const Scenario& scen, const EstimateArgs& args) {
  if (args.snr) {
    return synthesize_measurements(scen, args.target_index,
                                   NoisePolicy::from_snr(*args.snr), args.trial_seed);
  }
  // No SNR given: exact ranges with unit sigmas (noiseless evaluation).
  MeasurementSet m;
  m.trial_seed = args.trial_seed;
  m.ranges = path_lengths(scen.anchors, scen.targets.row(args.target_index));
  m.sigmas = VecX::Ones(scen.anchors.rows());
  return m;
}

int cmd_estimate(const EstimateArgs& args) {
  const Scenario scen = load_scenario(args.scenario);
  if (args.target_index < 0 || args.target_index >= scen.targets.rows())
    throw UsageError("target index out of range");
  const Vec3 truth = scen.targets.row(args.target_index);

  const bool is2d =
      args.method == "gtrs2d" || args.method == "usr2d" || args.method == "sdr2d";
  if (is2d && !args.z0) throw UsageError("2D methods require --z0");

  const MeasurementSet meas = make_measurements(scen, args);
  const VecX w = weights_from_sigmas(meas.sigmas);

  ordered_json out;
  out["method"] = args.method;
  ordered_json diag;

  if (is2d) {
    Estimate2D est;
    if (args.method == "gtrs2d") {
      est = solve_gtrs(build_lifted(scen.anchors, *args.z0, meas.ranges, meas.sigmas).gtrs);
    } else if (args.method == "usr2d") {
      est = solve_usr(build_lifted(scen.anchors, *args.z0, meas.ranges, meas.sigmas).usr);
    } else {
      est = solve_sdr(build_sdr(scen.anchors, *args.z0, meas.ranges, meas.sigmas));
    }
    out["estimate"] = {{"x", est.xy.x()}, {"y", est.xy.y()}};
    out["objective"] = est.objective;
    diag["iterations"] = est.iterations;
    if (est.lambda_star) diag["lambda_star"] = *est.lambda_star;
    if (est.sdp_rank_ratio) diag["sdp_rank_ratio"] = *est.sdp_rank_ratio;
    out["error_m"] = (est.xy - truth.head<2>()).norm();
  } else {
    Estimate3D est;
    if (args.method == "dnls") {
      const Vec3 init = random_point_in_box(
          scen.building, stream_key({scen.seed, 0x646E6C7301ULL,
                                     static_cast<std::uint64_t>(args.target_index),
                                     args.trial_seed}));
      est = d_nls(scen.anchors, w, meas.ranges, init, {});
    } else if (args.method == "msgn") {
      DnlsConfig cfg;
      cfg.step_halving = true;
      est = ms_gn(scen.anchors, w, meas.ranges, scen.building, args.seeds_per_dim, cfg);
    } else if (args.method.rfind("spsel-", 0) == 0) {
      const Inner inner = inner_from_string(args.method.substr(6));
      GnConfig gn;
      gn.polish_steps = args.polish_steps;
      const ZGrid grid = ZGrid::uniform(0.0, scen.building.lz, args.nz);
      est = sample_polish_select(scen.anchors, w, meas.ranges, grid, inner, gn);
    } else {
      throw UsageError("unknown method " + args.method);
    }
    out["estimate"] = {{"x", est.xyz.x()}, {"y", est.xyz.y()}, {"z", est.xyz.z()}};
    out["objective"] = est.objective;
    diag["seed_index"] = est.seed_index;
    diag["solver"] = to_string(est.solver);
    diag["gn_iterations"] = est.gn_iterations;
    out["error_m"] = (est.xyz - truth).norm();
  }
  out["diagnostics"] = diag;
  out["truth"] = {{"x", truth.x()}, {"y", truth.y()}, {"z", truth.z()}};

  ordered_json resolved;
  resolved["scenario"] = args.scenario;
  resolved["target_index"] = args.target_index;
  if (args.snr) resolved["snr_db"] = *args.snr;
  if (args.z0) resolved["z0"] = *args.z0;
  resolved["nz"] = args.nz;
  resolved["t"] = args.polish_steps;
  resolved["seeds_per_dim"] = args.seeds_per_dim;
  resolved["trial_seed"] = args.trial_seed;
  out["resolved"] = resolved;

  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

struct ProfileArgs {
  std::string scenario;
  int target_index = 0;
  std::optional<double> snr;
  std::string inner = "gtrs";
  int nz = 8;
  std::string out;
  std::uint64_t trial_seed = 0;
};

int cmd_profile(const ProfileArgs& args) {
  const Scenario scen = load_scenario(args.scenario);
  if (args.target_index < 0 || args.target_index >= scen.targets.rows())
    throw UsageError("target index out of range");
  Inner inner;
  try {
    inner = inner_from_string(args.inner);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  EstimateArgs meas_args;
  meas_args.snr = args.snr;
  meas_args.target_index = args.target_index;
  meas_args.trial_seed = args.trial_seed;
  const MeasurementSet meas = make_measurements(scen, meas_args);
  const VecX w = weights_from_sigmas(meas.sigmas);

  ProfileOptions opts;
  if (inner == Inner::GnTrue)
    opts.gn_init = Vec2(scen.targets.row(args.target_index).head<2>());

  const ZGrid grid = ZGrid::uniform(0.0, scen.building.lz, args.nz);
  const auto profile = z_profile(scen.anchors, w, meas.ranges, grid, inner, opts);

  if (args.out.empty()) {
    write_profile_csv(profile, inner, std::cout);
  } else {
    std::ofstream out(args.out);
    if (!out) throw IoError("cannot open " + args.out);
    write_profile_csv(profile, inner, out);
    if (!out) throw IoError("write failed for " + args.out);
  }
  return kExitOk;
}

struct BoundsArgs {
  std::string scenario;
  int target_index = 0;
  double snr = 20.0;
  int dim = 3;
};

int cmd_bounds(const BoundsArgs& args) {
  const Scenario scen = load_scenario(args.scenario);
  if (args.target_index < 0 || args.target_index >= scen.targets.rows())
    throw UsageError("target index out of range");
  if (args.dim != 2 && args.dim != 3) throw UsageError("--dim must be 2 or 3");
  const Vec3 truth = scen.targets.row(args.target_index);
  const NoisePolicy pol = NoisePolicy::from_snr(args.snr);
  const VecX sig = VecX::Constant(scen.anchors.rows(), pol.sigma);

  const Fim f = args.dim == 2 ? fim_2d(scen.anchors, sig, truth.head<2>(), truth.z())
                              : fim_3d(scen.anchors, sig, truth);
  ordered_json out;
  out["dim"] = args.dim;
  out["snr_db"] = args.snr;
  out["sigma_m"] = pol.sigma;
  ordered_json fj = ordered_json::array();
  for (int i = 0; i < f.info.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < f.info.cols(); ++j) row.push_back(f.info(i, j));
    fj.push_back(row);
  }
  out["fim"] = fj;
  out["peb_m"] = peb(f).value;
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::string config;
  std::string out_override;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
};

int cmd_bench(const BenchArgs& args, bool timed) {
  bench::ExperimentConfig cfg = bench::load_config(args.config);
  if (!args.out_override.empty()) cfg.out = args.out_override;
  if (args.threads) cfg.threads = *args.threads;
  if (args.seed) cfg.seed = *args.seed;
  if (cfg.out.empty()) throw UsageError("no output path; set \"out\" in the config or pass --out");
  const bench::McReport report =
      timed ? bench::time_estimators(cfg) : bench::run_experiment(cfg);
  bench::write_outputs(report, cfg);
  std::cout << "wrote " << cfg.out << " and " << cfg.out << ".config.json\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TOA localization under the unified LOS/NLOS path model"};
  app.require_subcommand(1);

  GenScenarioArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-scenario", "Sample a scenario and write JSON");
  cmd_gen->add_option("--config", gen.config, "JSON config with L, K, n_targets, seed");
  cmd_gen->add_option("--out", gen.out, "Output scenario path")->required();
  cmd_gen->add_option("--L", gen.L, "Box parameter (edge = 2L)");
  cmd_gen->add_option("--K", gen.K, "Anchor count");
  cmd_gen->add_option("--n-targets", gen.n_targets, "Target count");
  cmd_gen->add_option("--seed", gen.seed, "Scenario seed");

  EstimateArgs est;
  auto* cmd_est = app.add_subcommand("estimate", "Run one estimator on one target");
  cmd_est->add_option("--scenario", est.scenario, "Scenario JSON path")->required();
  cmd_est->add_option("--target-index", est.target_index, "Target row index");
  cmd_est->add_option("--snr", est.snr, "SNR in dB (omit for noiseless)");
  cmd_est
      ->add_option("--method", est.method,
                   "gtrs2d|usr2d|sdr2d|spsel-gtrs|spsel-usr|spsel-sdr|dnls|msgn")
      ->required();
  cmd_est->add_option("--z0", est.z0, "Fixed height for 2D methods");
  cmd_est->add_option("--nz", est.nz, "Height seeds for spsel methods");
  cmd_est->add_option("--t", est.polish_steps, "Polish iterations");
  cmd_est->add_option("--seeds-per-dim", est.seeds_per_dim, "msgn lattice size");
  cmd_est->add_option("--trial-seed", est.trial_seed, "Noise trial seed");

  ProfileArgs prof;
  auto* cmd_prof = app.add_subcommand("profile", "Emit the height profile CSV");
  cmd_prof->add_option("--scenario", prof.scenario, "Scenario JSON path")->required();
  cmd_prof->add_option("--target-index", prof.target_index, "Target row index");
  cmd_prof->add_option("--snr", prof.snr, "SNR in dB (omit for noiseless)");
  cmd_prof->add_option("--inner", prof.inner, "gtrs|usr|sdr|gn-true");
  cmd_prof->add_option("--nz", prof.nz, "Grid size");
  cmd_prof->add_option("--out", prof.out, "CSV path (default stdout)");
  cmd_prof->add_option("--trial-seed", prof.trial_seed, "Noise trial seed");

  BoundsArgs bnd;
  auto* cmd_bnd = app.add_subcommand("bounds", "Fisher information and error bound");
  cmd_bnd->add_option("--scenario", bnd.scenario, "Scenario JSON path")->required();
  cmd_bnd->add_option("--target-index", bnd.target_index, "Target row index");
  cmd_bnd->add_option("--snr", bnd.snr, "SNR in dB");
  cmd_bnd->add_option("--dim", bnd.dim, "2 or 3");

  BenchArgs ben;
  auto* cmd_ben = app.add_subcommand("bench", "Monte Carlo RMSE experiment");
  cmd_ben->add_option("--config", ben.config, "Experiment config JSON")->required();
  cmd_ben->add_option("--out", ben.out_override, "Override CSV output path");
  cmd_ben->add_option("--threads", ben.threads, "Worker pool size");
  cmd_ben->add_option("--seed", ben.seed, "Override experiment seed");

  BenchArgs tim;
  auto* cmd_tim = app.add_subcommand("time", "Monte Carlo with wall-time columns");
  cmd_tim->add_option("--config", tim.config, "Experiment config JSON")->required();
  cmd_tim->add_option("--out", tim.out_override, "Override CSV output path");
  cmd_tim->add_option("--threads", tim.threads, "Worker pool size");
  cmd_tim->add_option("--seed", tim.seed, "Override experiment seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_gen->parsed()) return cmd_gen_scenario(gen);
    if (cmd_est->parsed()) return cmd_estimate(est);
    if (cmd_prof->parsed()) return cmd_profile(prof);
    if (cmd_bnd->parsed()) return cmd_bounds(bnd);
    if (cmd_ben->parsed()) return cmd_bench(ben, false);
    if (cmd_tim->parsed()) return cmd_bench(tim, true);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoFailure& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
