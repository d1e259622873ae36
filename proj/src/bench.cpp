#include "diffloc/bench.hpp"

#include "diffloc/bounds.hpp"
#include "diffloc/est2d.hpp"
#include "diffloc/est3d.hpp"
#include "diffloc/geometry.hpp"
#include "diffloc/rng.hpp"
#include "diffloc/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <thread>

namespace diffloc::bench {

namespace {

constexpr std::uint64_t kTagScenario = 0x7363656E01ULL;
constexpr std::uint64_t kTagTargets = 0x7467747301ULL;
constexpr std::uint64_t kTagDnlsInit = 0x646E6C7301ULL;

const char* kMethods[] = {"gtrs2d",     "usr2d",     "sdr2d",    "spsel-gtrs",
                          "spsel-usr",  "spsel-sdr", "dnls",     "msgn"};

bool known_method(const std::string& m) {
  for (const char* s : kMethods)
    if (m == s) return true;
  return false;
}

}  // namespace

std::string EstimatorSpec::resolved_label() const {
  if (!label.empty()) return label;
  if (method.rfind("spsel-", 0) == 0) return method + "-nz" + std::to_string(nz);
  if (method == "msgn") return method + "-s" + std::to_string(seeds_per_dim * seeds_per_dim * seeds_per_dim);
  return method;
}

bool EstimatorSpec::is_2d() const {
  return method == "gtrs2d" || method == "usr2d" || method == "sdr2d";
}

ExperimentConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bench config: parse failed: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    for (const auto& je : j.at("estimators")) {
      EstimatorSpec spec;
      if (je.is_string()) {
        spec.method = je.get<std::string>();
      } else {
        spec.method = je.at("method").get<std::string>();
        spec.nz = je.value("nz", spec.nz);
        spec.polish_steps = je.value("t", spec.polish_steps);
        spec.seeds_per_dim = je.value("seeds_per_dim", spec.seeds_per_dim);
        spec.label = je.value("label", spec.label);
      }
      cfg.estimators.push_back(spec);
    }
    cfg.snr_db = j.at("snr_db").get<std::vector<double>>();
    cfg.n_anchor_sets = j.value("n_anchor_sets", cfg.n_anchor_sets);
    cfg.n_targets = j.value("n_targets", cfg.n_targets);
    cfg.n_noise = j.value("n_noise", cfg.n_noise);
    cfg.num_anchors = j.value("K", cfg.num_anchors);
    cfg.L = j.value("L", cfg.L);
    cfg.bandwidth_hz = j.value("bandwidth_hz", cfg.bandwidth_hz);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.out = j.value("out", cfg.out);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bench config: bad schema: ") + e.what());
  }
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["estimators"] = nlohmann::ordered_json::array();
  for (const auto& e : cfg.estimators) {
    nlohmann::ordered_json je;
    je["method"] = e.method;
    je["nz"] = e.nz;
    je["t"] = e.polish_steps;
    je["seeds_per_dim"] = e.seeds_per_dim;
    je["label"] = e.resolved_label();
    j["estimators"].push_back(je);
  }
  j["snr_db"] = cfg.snr_db;
  j["n_anchor_sets"] = cfg.n_anchor_sets;
  j["n_targets"] = cfg.n_targets;
  j["n_noise"] = cfg.n_noise;
  j["K"] = cfg.num_anchors;
  j["L"] = cfg.L;
  j["bandwidth_hz"] = cfg.bandwidth_hz;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["out"] = cfg.out;
  return j.dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("bench: cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

const McRow& McReport::row(const std::string& label, double snr) const {
  for (const McRow& r : rows)
    if (r.estimator == label && r.snr_db == snr) return r;
  throw InvalidArgument("McReport: no row for " + label + " at " + std::to_string(snr) +
                        " dB");
}

namespace {

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.estimators.empty()) throw InvalidArgument("bench: no estimators configured");
  if (cfg.snr_db.empty()) throw InvalidArgument("bench: empty SNR list");
  if (cfg.n_anchor_sets < 1 || cfg.n_targets < 1 || cfg.n_noise < 1)
    throw InvalidArgument("bench: all counts must be >= 1");
  if (cfg.num_anchors < 4) throw InvalidArgument("bench: need K >= 4");
  if (!(cfg.L > 0.0)) throw InvalidArgument("bench: need L > 0");
  for (const auto& e : cfg.estimators) {
    if (!known_method(e.method))
      throw InvalidArgument("bench: unknown estimator method " + e.method);
    if (e.nz < 2 || e.polish_steps < 1 || e.seeds_per_dim < 2)
      throw InvalidArgument("bench: bad estimator parameters for " + e.method);
  }
}

// One estimate; returns squared position error.
double run_one(const EstimatorSpec& spec, const Scenario& scen, int target_index,
               const MeasurementSet& meas, std::uint64_t init_key) {
  const Vec3 truth = scen.targets.row(target_index);
  const VecX w = weights_from_sigmas(meas.sigmas);
  const ZGrid grid = ZGrid::uniform(0.0, scen.building.lz, 8);

  if (spec.method == "gtrs2d") {
    const Lifted l = build_lifted(scen.anchors, truth.z(), meas.ranges, meas.sigmas);
    return (solve_gtrs(l.gtrs).xy - truth.head<2>()).squaredNorm();
  }
  if (spec.method == "usr2d") {
    const Lifted l = build_lifted(scen.anchors, truth.z(), meas.ranges, meas.sigmas);
    return (solve_usr(l.usr).xy - truth.head<2>()).squaredNorm();
  }
  if (spec.method == "sdr2d") {
    const SdrProblem p = build_sdr(scen.anchors, truth.z(), meas.ranges, meas.sigmas);
    return (solve_sdr(p).xy - truth.head<2>()).squaredNorm();
  }
  if (spec.method.rfind("spsel-", 0) == 0) {
    const Inner inner = inner_from_string(spec.method.substr(6));
    GnConfig gn;
    gn.polish_steps = spec.polish_steps;
    const ZGrid g = ZGrid::uniform(0.0, scen.building.lz, spec.nz);
    return (sample_polish_select(scen.anchors, w, meas.ranges, g, inner, gn).xyz - truth)
        .squaredNorm();
  }
  if (spec.method == "dnls") {
    const Vec3 init = random_point_in_box(scen.building, init_key);
    DnlsConfig cfg;  // single-start baseline runs without step halving
    return (d_nls(scen.anchors, w, meas.ranges, init, cfg).xyz - truth).squaredNorm();
  }
  if (spec.method == "msgn") {
    DnlsConfig cfg;
    cfg.step_halving = true;
    return (ms_gn(scen.anchors, w, meas.ranges, scen.building, spec.seeds_per_dim, cfg)
                .xyz -
            truth)
        .squaredNorm();
  }
  (void)grid;
  throw InvalidArgument("bench: unknown estimator method " + spec.method);
}

struct CellAccum {
  double sum_sq = 0.0;
  long n_ok = 0;
  long n_fail = 0;
  double sum_peb_sq = 0.0;  // over (anchor set, target) pairs
  long n_peb = 0;
  std::vector<double> times;  // seconds, only in timing mode
};

McReport run_core(const ExperimentConfig& cfg, bool timed) {
  validate_config(cfg);
  const int n_est = static_cast<int>(cfg.estimators.size());
  const int n_snr = static_cast<int>(cfg.snr_db.size());
  const int n_pairs = cfg.n_anchor_sets * cfg.n_targets;

  const BuildingBox box{2.0 * cfg.L, 2.0 * cfg.L, 2.0 * cfg.L};
  const MatX3 targets = sample_targets(box, cfg.n_targets, mix_key(cfg.seed, kTagTargets));

  std::vector<NoisePolicy> policies;
  for (double snr : cfg.snr_db)
    policies.push_back(NoisePolicy::from_snr(snr, cfg.bandwidth_hz));

  // Partial accumulators per pair so reduction order is fixed regardless of
  // the thread schedule.
  std::vector<std::vector<CellAccum>> partial(
      n_pairs, std::vector<CellAccum>(static_cast<std::size_t>(n_est) * n_snr));

  auto work_pair = [&](int pair) {
    const int a = pair / cfg.n_targets;
    const int t = pair % cfg.n_targets;
    Scenario scen;
    scen.building = box;
    scen.seed = stream_key({cfg.seed, kTagScenario, static_cast<std::uint64_t>(a)});
    scen.anchors =
        sample_anchors(box, cfg.num_anchors, mix_key(scen.seed, 0x616E6368ULL));
    scen.targets = targets;
    const Vec3 truth = targets.row(t);

    for (int si = 0; si < n_snr; ++si) {
      const NoisePolicy& pol = policies[si];
      const VecX sig = VecX::Constant(cfg.num_anchors, pol.sigma);

      double peb2 = 0.0, peb3 = 0.0;
      bool peb_ok = false;
      try {
        peb2 = peb(fim_2d(scen.anchors, sig, truth.head<2>(), truth.z())).value;
        peb3 = peb(fim_3d(scen.anchors, sig, truth)).value;
        peb_ok = true;
      } catch (const Error&) {
      }

      for (int trial = 0; trial < cfg.n_noise; ++trial) {
        const std::uint64_t trial_seed =
            stream_key({static_cast<std::uint64_t>(si), static_cast<std::uint64_t>(trial)});
        const MeasurementSet meas = synthesize_measurements(scen, t, pol, trial_seed);
        const std::uint64_t init_key = stream_key(
            {scen.seed, kTagDnlsInit, static_cast<std::uint64_t>(t), trial_seed});

        for (int ei = 0; ei < n_est; ++ei) {
          CellAccum& acc = partial[pair][static_cast<std::size_t>(ei) * n_snr + si];
          if (trial == 0 && peb_ok) {
            acc.sum_peb_sq += cfg.estimators[ei].is_2d() ? peb2 * peb2 : peb3 * peb3;
            acc.n_peb += 1;
          }
          try {
            const auto t0 = std::chrono::steady_clock::now();
            const double sq = run_one(cfg.estimators[ei], scen, t, meas, init_key);
            const auto t1 = std::chrono::steady_clock::now();
            acc.sum_sq += sq;
            acc.n_ok += 1;
            if (timed)
              acc.times.push_back(std::chrono::duration<double>(t1 - t0).count());
          } catch (const Error&) {
            acc.n_fail += 1;
          }
        }
      }
    }
  };

  int n_threads = cfg.threads > 0 ? cfg.threads
                                  : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min(n_threads, n_pairs));
  if (n_threads == 1) {
    for (int pair = 0; pair < n_pairs; ++pair) work_pair(pair);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int w = 0; w < n_threads; ++w)
      pool.emplace_back([&]() {
        for (int pair = next.fetch_add(1); pair < n_pairs; pair = next.fetch_add(1))
          work_pair(pair);
      });
    for (auto& th : pool) th.join();
  }

  McReport report;
  for (int ei = 0; ei < n_est; ++ei) {
    for (int si = 0; si < n_snr; ++si) {
      CellAccum total;
      std::vector<double> times;
      for (int pair = 0; pair < n_pairs; ++pair) {
        const CellAccum& acc = partial[pair][static_cast<std::size_t>(ei) * n_snr + si];
        total.sum_sq += acc.sum_sq;
        total.n_ok += acc.n_ok;
        total.n_fail += acc.n_fail;
        total.sum_peb_sq += acc.sum_peb_sq;
        total.n_peb += acc.n_peb;
        times.insert(times.end(), acc.times.begin(), acc.times.end());
      }
      McRow row;
      row.estimator = cfg.estimators[ei].resolved_label();
      row.snr_db = cfg.snr_db[si];
      row.num_anchors = cfg.num_anchors;
      row.rmse_m = total.n_ok > 0 ? std::sqrt(total.sum_sq / total.n_ok) : 0.0;
      row.peb_m = total.n_peb > 0 ? std::sqrt(total.sum_peb_sq / total.n_peb) : 0.0;
      if (!times.empty()) {
        std::sort(times.begin(), times.end());
        row.mean_walltime_s = times[times.size() / 2];
      }
      row.n_trials = total.n_ok + total.n_fail;
      row.n_fail = total.n_fail;
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace

McReport run_experiment(const ExperimentConfig& cfg) { return run_core(cfg, false); }

McReport time_estimators(const ExperimentConfig& cfg) { return run_core(cfg, true); }

void write_csv(const McReport& report, std::ostream& out) {
  out << "estimator,snr_db,K,rmse_m,peb_m,mean_walltime_s,n_trials,n_fail\n";
  char line[320];
  for (const McRow& r : report.rows) {
    std::snprintf(line, sizeof(line), "%s,%.10g,%d,%.10g,%.10g,%.10g,%ld,%ld\n",
                  r.estimator.c_str(), r.snr_db, r.num_anchors, r.rmse_m, r.peb_m,
                  r.mean_walltime_s, r.n_trials, r.n_fail);
    out << line;
  }
}

void write_outputs(const McReport& report, const ExperimentConfig& cfg) {
  if (cfg.out.empty()) throw InvalidArgument("bench: no output path configured");
  std::ofstream csv(cfg.out);
  if (!csv) throw IoFailure("bench: cannot open " + cfg.out);
  write_csv(report, csv);
  if (!csv) throw IoFailure("bench: write failed for " + cfg.out);
  std::ofstream side(cfg.out + ".config.json");
  if (!side) throw IoFailure("bench: cannot open " + cfg.out + ".config.json");
  side << config_to_json(cfg);
}

}  // namespace diffloc::bench
