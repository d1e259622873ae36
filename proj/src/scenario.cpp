#include "diffloc/scenario.hpp"

#include "diffloc/geometry.hpp"
#include "diffloc/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace diffloc {

namespace {

// Stream-key domain tags.
constexpr std::uint64_t kTagTargets = 0x7461726765747301ULL;
constexpr std::uint64_t kTagAnchors = 0x616E63686F727302ULL;
constexpr std::uint64_t kTagNoise = 0x6E6F69736503ULL;

constexpr double kMinAnchorOffset = 0.1;  // meters, rejects LOS-plane degeneracy

}  // namespace

NoisePolicy NoisePolicy::from_snr(double snr_db, double bandwidth_hz) {
  NoisePolicy p;
  p.snr_db = snr_db;
  p.bandwidth_hz = bandwidth_hz;
  p.sigma = sigma_from_snr(snr_db, bandwidth_hz);
  return p;
}

double sigma_from_snr(double snr_db, double bandwidth_hz) {
  if (!(bandwidth_hz > 0.0)) throw InvalidArgument("sigma_from_snr: bandwidth must be positive");
  const double snr = std::pow(10.0, snr_db / 10.0);
  return kSpeedOfLight / (2.0 * std::sqrt(2.0) * M_PI * bandwidth_hz * std::sqrt(snr));
}

MatX3 sample_targets(const BuildingBox& box, int n, std::uint64_t key) {
  if (n < 1) throw InvalidArgument("sample_targets: need n >= 1");
  SplitMix64 rng(key);
  MatX3 t(n, 3);
  for (int i = 0; i < n; ++i) {
    t(i, 0) = rng.uniform(0.0, box.lx);
    t(i, 1) = rng.uniform(0.0, box.ly);
    t(i, 2) = rng.uniform(0.0, box.lz);
  }
  return t;
}

MatX3 sample_anchors(const BuildingBox& box, int k, std::uint64_t key) {
  if (k < 1) throw InvalidArgument("sample_anchors: need k >= 1");
  SplitMix64 rng(key);
  MatX3 a(k, 3);
  for (int i = 0; i < k; ++i) {
    double x, y, z;
    do {
      x = rng.uniform(0.0, box.lx);
      y = rng.uniform(-box.ly, 0.0);
      z = rng.uniform(0.0, box.lz);
    } while (std::abs(y) < kMinAnchorOffset);
    a.row(i) << x, y, z;
  }
  return a;
}

Vec3 random_point_in_box(const BuildingBox& box, std::uint64_t key) {
  SplitMix64 rng(key);
  return {rng.uniform(0.0, box.lx), rng.uniform(0.0, box.ly), rng.uniform(0.0, box.lz)};
}

Scenario sample_scenario(const ScenarioParams& params) {
  if (params.num_anchors < 3) throw InvalidArgument("sample_scenario: need K >= 3");
  if (params.num_targets < 1) throw InvalidArgument("sample_scenario: need N_targets >= 1");
  if (!(params.L > 0.0)) throw InvalidArgument("sample_scenario: need L > 0");
  Scenario s;
  s.building = {2.0 * params.L, 2.0 * params.L, 2.0 * params.L};
  s.seed = params.seed;
  s.targets = sample_targets(s.building, params.num_targets, mix_key(params.seed, kTagTargets));
  s.anchors = sample_anchors(s.building, params.num_anchors, mix_key(params.seed, kTagAnchors));
  return s;
}

void validate(const Scenario& s) {
  if (!(s.building.lx > 0 && s.building.ly > 0 && s.building.lz > 0))
    throw InvalidArgument("scenario: degenerate building box");
  if (!s.anchors.allFinite() || !s.targets.allFinite())
    throw InvalidArgument("scenario: non-finite coordinates");
  for (Eigen::Index i = 0; i < s.targets.rows(); ++i) {
    const auto t = s.targets.row(i);
    if (!(t(0) > 0 && t(0) < s.building.lx && t(1) > 0 && t(1) < s.building.ly &&
          t(2) > 0 && t(2) < s.building.lz))
      throw InvalidArgument("scenario: target " + std::to_string(i) +
                            " not strictly inside the building box");
  }
}

MeasurementSet synthesize_measurements(const Scenario& s, int target_index,
                                       const NoisePolicy& policy,
                                       std::uint64_t trial_seed) {
  if (target_index < 0 || target_index >= s.targets.rows())
    throw InvalidArgument("synthesize_measurements: target index out of range");
  if (!(policy.sigma >= 0.0))
    throw InvalidArgument("synthesize_measurements: sigma must be nonnegative");
  const Vec3 target = s.targets.row(target_index);
  SplitMix64 rng(stream_key({s.seed, kTagNoise, static_cast<std::uint64_t>(target_index),
                             trial_seed}));
  MeasurementSet m;
  m.trial_seed = trial_seed;
  m.ranges.resize(s.anchors.rows());
  m.sigmas = VecX::Constant(s.anchors.rows(), policy.sigma);
  for (Eigen::Index k = 0; k < s.anchors.rows(); ++k)
    m.ranges(k) = path_length(s.anchors.row(k), target) + policy.sigma * rng.gaussian();
  return m;
}

namespace {

nlohmann::ordered_json points_to_json(const MatX3& pts) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    arr.push_back({pts(i, 0), pts(i, 1), pts(i, 2)});
  return arr;
}

MatX3 points_from_json(const nlohmann::json& arr, const char* what) {
  if (!arr.is_array() || arr.empty())
    throw InvalidArgument(std::string("scenario json: ") + what + " must be a nonempty array");
  MatX3 pts(arr.size(), 3);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_array() || arr[i].size() != 3)
      throw InvalidArgument(std::string("scenario json: ") + what + " rows must be [x,y,z]");
    for (int j = 0; j < 3; ++j) pts(i, j) = arr[i][j].get<double>();
  }
  return pts;
}

}  // namespace

std::string scenario_to_json(const Scenario& s) {
  nlohmann::ordered_json j;
  j["building"] = {{"lx", s.building.lx}, {"ly", s.building.ly}, {"lz", s.building.lz}};
  j["anchors"] = points_to_json(s.anchors);
  j["targets"] = points_to_json(s.targets);
  j["seed"] = s.seed;
  return j.dump(2) + "\n";
}

Scenario scenario_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("scenario json: parse failed: ") + e.what());
  }
  Scenario s;
  try {
    s.building.lx = j.at("building").at("lx").get<double>();
    s.building.ly = j.at("building").at("ly").get<double>();
    s.building.lz = j.at("building").at("lz").get<double>();
    s.anchors = points_from_json(j.at("anchors"), "anchors");
    s.targets = points_from_json(j.at("targets"), "targets");
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("scenario json: bad schema: ") + e.what());
  }
  validate(s);
  return s;
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("save_scenario: cannot open " + path);
  out << scenario_to_json(s);
  if (!out) throw IoFailure("save_scenario: write failed for " + path);
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("load_scenario: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return scenario_from_json(text);
}

}  // namespace diffloc
