#ifndef ANCHORMAP_SIM_SCENARIO_HPP_
#define ANCHORMAP_SIM_SCENARIO_HPP_

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "anchormap/ekf/filter.hpp"
#include "anchormap/nl_refine.hpp"
#include "anchormap/waypoint/evolutionary.hpp"

namespace anchormap::sim
{
inline constexpr int kScenarioSchemaVersion = 1;

/// Random flight used for the first data collection.
struct TrajectorySpec
{
  int random_waypoints = 8;
  double speed_mps = 1.0;
  double sample_rate_hz = 10.0;
  /// waypoints are drawn in a box of this fraction of the volume extents around its center
  double extent_fraction = 1.0;
};

struct StageToggles
{
  bool ls = true;
  bool nls = true;
  bool rnd_wps = true;
  bool opt_wps = true;
};

struct FusionSpec
{
  double duration_s = 60.0;
  double camera_rate_hz = 10.0;
  double range_rate_hz = 20.0;
  double pose_sigma_m = 0.05;
  /// random-walk drift of the pose source [m / sqrt(s)]
  double pose_drift_m_per_sqrt_s = 0.03;
  double sigma_range_m = 0.1;
  double accel_psd = 0.5;
  double motion_period_s = 20.0;
  Vec3 tag_offset = Vec3(0.05, 0.0, -0.03);
  std::vector<ekf::DropoutInterval> dropouts;
  std::vector<int> online_anchor_ids;
  double online_init_error_m = 0.3;
};

struct Scenario
{
  std::string name = "scenario";
  FlightVolume volume;
  std::vector<Anchor> anchors;
  NoiseSpec noise;
  TrajectorySpec trajectory;
  int samples_per_stage = 200;
  /// cruise speed used to time the waypoint trajectories
  double waypoint_speed_mps = 1.0;
  StageToggles stages;
  EvoConfig evo;
  LmConfig lm;
  std::uint64_t rng_seed = 1;
  int realizations = 1;
  FusionSpec fusion;
};

namespace detail
{
inline nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec(const nlohmann::json& j)
{
  if (!j.is_array() || j.size() != 3)
    throw Error(ErrorCode::ScenarioInvalid, "expected a 3-vector, got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline std::array<int, 3> json_int3(const nlohmann::json& j)
{
  if (!j.is_array() || j.size() != 3)
    throw Error(ErrorCode::ScenarioInvalid, "expected 3 integers, got " + j.dump());
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}
}  // namespace detail

inline void validate(const Scenario& s)
{
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ScenarioInvalid, what); };
  try
  {
    s.volume.validate();
    s.evo.validate();
    s.lm.validate();
  }
  catch (const Error& e)
  {
    fail(e.what());
  }
  if (s.anchors.empty())
    fail("at least one anchor is required");
  std::set<int> ids;
  for (const auto& a : s.anchors)
  {
    if (!ids.insert(a.id).second)
      fail("duplicate anchor id " + std::to_string(a.id));
    if (!(a.beta > 0.0) || !a.position.allFinite() || !std::isfinite(a.gamma))
      fail("anchor " + std::to_string(a.id) + " has invalid parameters");
  }
  if (!s.noise.valid())
    fail("noise std must be non-negative");
  if (s.realizations < 1)
    fail("realizations must be >= 1");
  if (s.samples_per_stage < 5)
    fail("samples_per_stage must be >= 5");
  if (s.trajectory.random_waypoints < 0 || !(s.trajectory.speed_mps >= 0.0) || !(s.trajectory.sample_rate_hz > 0.0) ||
      !(s.trajectory.extent_fraction > 0.0 && s.trajectory.extent_fraction <= 1.0))
    fail("invalid trajectory spec");
  if (!(s.waypoint_speed_mps > 0.0))
    fail("waypoint_speed_mps must be positive");
  if (s.volume.waypoint_count() < 4)
    fail("the waypoint grid must provide at least 4 waypoints");
  const auto& f = s.fusion;
  if (!(f.duration_s > 0.0) || !(f.camera_rate_hz > 0.0) || !(f.range_rate_hz > 0.0) || !(f.pose_sigma_m > 0.0) ||
      !(f.sigma_range_m > 0.0) || f.accel_psd < 0.0 || f.pose_drift_m_per_sqrt_s < 0.0 || !(f.motion_period_s > 0.0))
    fail("invalid fusion spec");
  for (const auto& d : f.dropouts)
    if (!(d.end >= d.start))
      fail("dropout interval end precedes start");
  for (int id : f.online_anchor_ids)
    if (!ids.count(id))
      fail("online anchor id " + std::to_string(id) + " is not a scenario anchor");
  if (!f.online_anchor_ids.empty() && s.anchors.size() < f.online_anchor_ids.size() + 2)
    fail("online anchor refinement needs at least two fixed anchors");
}

inline nlohmann::json to_json(const Scenario& s)
{
  using nlohmann::json;
  json anchors = json::array();
  for (const auto& a : s.anchors)
    anchors.push_back({{"id", a.id}, {"position_m", detail::vec_json(a.position)}, {"beta", a.beta}, {"gamma_m", a.gamma}});
  json footprint = json::array();
  for (const auto& p : s.volume.footprint)
    footprint.push_back({p.x(), p.y()});
  json dropouts = json::array();
  for (const auto& d : s.fusion.dropouts)
    dropouts.push_back({{"start_s", d.start}, {"end_s", d.end}});

  return {
      {"schema_version", kScenarioSchemaVersion},
      {"name", s.name},
      {"volume",
       {{"center_m", detail::vec_json(s.volume.center)},
        {"length_m", s.volume.length},
        {"width_m", s.volume.width},
        {"height_m", s.volume.height},
        {"grid", s.volume.grid},
        {"resolution", s.volume.resolution},
        {"footprint_m", footprint}}},
      {"anchors", anchors},
      {"noise", {{"sigma_range_m", s.noise.sigma_range}, {"sigma_position_m", s.noise.sigma_position}}},
      {"trajectory",
       {{"random_waypoints", s.trajectory.random_waypoints},
        {"speed_mps", s.trajectory.speed_mps},
        {"sample_rate_hz", s.trajectory.sample_rate_hz},
        {"extent_fraction", s.trajectory.extent_fraction}}},
      {"samples_per_stage", s.samples_per_stage},
      {"waypoint_speed_mps", s.waypoint_speed_mps},
      {"stages", {{"ls", s.stages.ls}, {"nls", s.stages.nls}, {"rnd_wps", s.stages.rnd_wps}, {"opt_wps", s.stages.opt_wps}}},
      {"evolution",
       {{"population_size", s.evo.population_size},
        {"max_generations", s.evo.max_generations},
        {"crossover_prob", s.evo.crossover_prob},
        {"mutation_prob", s.evo.mutation_prob},
        {"elitism_prob", s.evo.elitism_prob},
        {"stall_generations", s.evo.stall_generations}}},
      {"lm",
       {{"lambda_init", s.lm.lambda_init},
        {"lambda_up", s.lm.lambda_up},
        {"lambda_down", s.lm.lambda_down},
        {"max_iters", s.lm.max_iters},
        {"cost_tol", s.lm.cost_tol}}},
      {"rng_seed", s.rng_seed},
      {"realizations", s.realizations},
      {"fusion",
       {{"duration_s", s.fusion.duration_s},
        {"camera_rate_hz", s.fusion.camera_rate_hz},
        {"range_rate_hz", s.fusion.range_rate_hz},
        {"pose_sigma_m", s.fusion.pose_sigma_m},
        {"pose_drift_m_per_sqrt_s", s.fusion.pose_drift_m_per_sqrt_s},
        {"sigma_range_m", s.fusion.sigma_range_m},
        {"accel_psd_m2_per_s3", s.fusion.accel_psd},
        {"motion_period_s", s.fusion.motion_period_s},
        {"tag_offset_m", detail::vec_json(s.fusion.tag_offset)},
        {"dropouts", dropouts},
        {"online_anchor_ids", s.fusion.online_anchor_ids},
        {"online_init_error_m", s.fusion.online_init_error_m}}},
  };
}

///
/// \brief Parses a scenario; absent optional sections keep their defaults. Any structural
/// or semantic problem is reported as ScenarioInvalid.
///
inline Scenario scenario_from_json(const nlohmann::json& j)
{
  Scenario s;
  try
  {
    const int version = j.value("schema_version", kScenarioSchemaVersion);
    if (version > kScenarioSchemaVersion)
      throw Error(ErrorCode::ScenarioInvalid, "scenario schema_version " + std::to_string(version) + " is newer than " +
                                                  std::to_string(kScenarioSchemaVersion));
    s.name = j.value("name", s.name);

    const auto& v = j.at("volume");
    s.volume.center = detail::json_vec(v.at("center_m"));
    s.volume.length = v.at("length_m").get<double>();
    s.volume.width = v.at("width_m").get<double>();
    s.volume.height = v.at("height_m").get<double>();
    if (v.contains("grid"))
      s.volume.grid = detail::json_int3(v["grid"]);
    if (v.contains("resolution"))
      s.volume.resolution = detail::json_int3(v["resolution"]);
    if (v.contains("footprint_m"))
      for (const auto& p : v["footprint_m"])
        s.volume.footprint.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());

    for (const auto& a : j.at("anchors"))
      s.anchors.push_back({a.at("id").get<int>(), detail::json_vec(a.at("position_m")), a.value("beta", 1.0),
                           a.value("gamma_m", 0.0)});

    const auto& n = j.at("noise");
    s.noise.sigma_range = n.at("sigma_range_m").get<double>();
    s.noise.sigma_position = n.at("sigma_position_m").get<double>();

    if (j.contains("trajectory"))
    {
      const auto& t = j["trajectory"];
      s.trajectory.random_waypoints = t.value("random_waypoints", s.trajectory.random_waypoints);
      s.trajectory.speed_mps = t.value("speed_mps", s.trajectory.speed_mps);
      s.trajectory.sample_rate_hz = t.value("sample_rate_hz", s.trajectory.sample_rate_hz);
      s.trajectory.extent_fraction = t.value("extent_fraction", s.trajectory.extent_fraction);
    }
    s.samples_per_stage = j.value("samples_per_stage", s.samples_per_stage);
    s.waypoint_speed_mps = j.value("waypoint_speed_mps", s.waypoint_speed_mps);
    if (j.contains("stages"))
    {
      const auto& st = j["stages"];
      s.stages.ls = st.value("ls", true);
      s.stages.nls = st.value("nls", true);
      s.stages.rnd_wps = st.value("rnd_wps", true);
      s.stages.opt_wps = st.value("opt_wps", true);
    }
    if (j.contains("evolution"))
    {
      const auto& e = j["evolution"];
      s.evo.population_size = e.value("population_size", s.evo.population_size);
      s.evo.max_generations = e.value("max_generations", s.evo.max_generations);
      s.evo.crossover_prob = e.value("crossover_prob", s.evo.crossover_prob);
      s.evo.mutation_prob = e.value("mutation_prob", s.evo.mutation_prob);
      s.evo.elitism_prob = e.value("elitism_prob", s.evo.elitism_prob);
      s.evo.stall_generations = e.value("stall_generations", s.evo.stall_generations);
    }
    if (j.contains("lm"))
    {
      const auto& l = j["lm"];
      s.lm.lambda_init = l.value("lambda_init", s.lm.lambda_init);
      s.lm.lambda_up = l.value("lambda_up", s.lm.lambda_up);
      s.lm.lambda_down = l.value("lambda_down", s.lm.lambda_down);
      s.lm.max_iters = l.value("max_iters", s.lm.max_iters);
      s.lm.cost_tol = l.value("cost_tol", s.lm.cost_tol);
    }
    s.rng_seed = j.value("rng_seed", s.rng_seed);
    s.realizations = j.value("realizations", s.realizations);
    if (j.contains("fusion"))
    {
      const auto& f = j["fusion"];
      auto& o = s.fusion;
      o.duration_s = f.value("duration_s", o.duration_s);
      o.camera_rate_hz = f.value("camera_rate_hz", o.camera_rate_hz);
      o.range_rate_hz = f.value("range_rate_hz", o.range_rate_hz);
      o.pose_sigma_m = f.value("pose_sigma_m", o.pose_sigma_m);
      o.pose_drift_m_per_sqrt_s = f.value("pose_drift_m_per_sqrt_s", o.pose_drift_m_per_sqrt_s);
      o.sigma_range_m = f.value("sigma_range_m", o.sigma_range_m);
      o.accel_psd = f.value("accel_psd_m2_per_s3", o.accel_psd);
      o.motion_period_s = f.value("motion_period_s", o.motion_period_s);
      if (f.contains("tag_offset_m"))
        o.tag_offset = detail::json_vec(f["tag_offset_m"]);
      if (f.contains("dropouts"))
        for (const auto& d : f["dropouts"])
          o.dropouts.push_back({d.at("start_s").get<double>(), d.at("end_s").get<double>()});
      if (f.contains("online_anchor_ids"))
        o.online_anchor_ids = f["online_anchor_ids"].get<std::vector<int>>();
      o.online_init_error_m = f.value("online_init_error_m", o.online_init_error_m);
    }
  }
  catch (const nlohmann::json::exception& e)
  {
    throw Error(ErrorCode::ScenarioInvalid, e.what());
  }
  validate(s);
  return s;
}

inline Scenario load_scenario(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::Io, "cannot open scenario file " + path);
  nlohmann::json j;
  try
  {
    in >> j;
  }
  catch (const nlohmann::json::exception& e)
  {
    throw Error(ErrorCode::ScenarioInvalid, path + ": " + e.what());
  }
  return scenario_from_json(j);
}

/// FNV-1a over the canonical JSON dump, as 16 hex digits.
inline std::string scenario_hash(const Scenario& s)
{
  const std::string text = to_json(s).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text)
  {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace anchormap::sim

#endif  // ANCHORMAP_SIM_SCENARIO_HPP_
