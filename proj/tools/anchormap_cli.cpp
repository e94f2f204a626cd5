// Command-line front end: init, plan, simulate, montecarlo, fuse.

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "anchormap/anchormap.hpp"

namespace fs = std::filesystem;
using namespace anchormap;
using namespace anchormap::sim;

namespace
{
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitScenario = 2;
constexpr int kExitStageFailure = 3;

struct Options
{
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string stages;
  int threads = 1;
};

StageToggles parse_stages(const std::string& list)
{
  StageToggles t{false, false, false, false};
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
  {
    std::string key;
    for (char c : item)
      if (std::isalnum(static_cast<unsigned char>(c)))
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (key == "ls")
      t.ls = true;
    else if (key == "nls")
      t.nls = true;
    else if (key == "rndwps")
      t.rnd_wps = true;
    else if (key == "optwps")
      t.opt_wps = true;
    else if (key == "all")
      t = StageToggles{};
    else if (!key.empty())
      throw Error(ErrorCode::ScenarioInvalid, "unknown stage '" + item + "'");
  }
  return t;
}

Scenario load(const Options& o)
{
  Scenario sc = load_scenario(o.scenario);
  if (o.seed)
    sc.rng_seed = *o.seed;
  if (!o.stages.empty())
    sc.stages = parse_stages(o.stages);
  return sc;
}

void print_aggregates(const RunReport& rep)
{
  for (const auto& a : rep.aggregates)
    std::cout << to_string(a.stage) << ": mean " << a.mean_position_error << " m, std " << a.std_position_error
              << " m over " << a.count << " realizations\n";
}

int finish_pipeline(const Scenario& sc, const RunReport& rep, const Options& o)
{
  emit_report(rep, o.out);
  print_aggregates(rep);
  std::cout << "wrote " << (fs::path(o.out) / "results.json").string() << '\n';
  return stage_failed_everywhere(rep, sc.stages) ? kExitStageFailure : kExitOk;
}

std::string trajectory_csv(std::span<const TimedPoint> traj)
{
  std::ostringstream os;
  os.precision(17);
  os << "t,x,y,z\n";
  for (const auto& p : traj)
    os << p.t << ',' << p.position.x() << ',' << p.position.y() << ',' << p.position.z() << '\n';
  return os.str();
}

std::string ranges_csv(std::span<const RangeMeasurement> ms)
{
  std::ostringstream os;
  os.precision(17);
  os << "t,anchor_id,range_m,tag_x,tag_y,tag_z\n";
  for (const auto& m : ms)
    os << m.timestamp << ',' << m.anchor_id << ',' << m.range << ',' << m.tag_position.x() << ','
       << m.tag_position.y() << ',' << m.tag_position.z() << '\n';
  return os.str();
}

int cmd_init(const Options& o)
{
  Scenario sc = load(o);
  if (o.stages.empty())
  {
    sc.stages.rnd_wps = false;
    sc.stages.opt_wps = false;
  }
  return finish_pipeline(sc, run_pipeline(sc, o.threads), o);
}

int cmd_montecarlo(const Options& o)
{
  const Scenario sc = load(o);
  return finish_pipeline(sc, run_pipeline(sc, o.threads), o);
}

int cmd_plan(const Options& o)
{
  const Scenario sc = load(o);
  std::vector<Vec3> anchors;
  for (const auto& a : sc.anchors)
    anchors.push_back(a.position);
  EvoConfig evo = sc.evo;
  evo.rng_seed = derive_seed(sc.rng_seed, {0, kOptimizer});
  const auto plan = optimize_waypoints(sc.volume, anchors, sc.volume.center, evo);

  std::vector<Vec3> chain{sc.volume.center};
  chain.insert(chain.end(), plan.waypoints.begin(), plan.waypoints.end());
  const auto traj = min_snap_trajectory(plan.waypoints, sc.volume.center,
                                        segment_times_by_distance(chain, sc.waypoint_speed_mps));
  write_json(fs::path(o.out) / "waypoints.json", waypoints_to_json(plan, anchors));
  write_text(fs::path(o.out) / "trajectory.csv", trajectory_csv(to_timed_points(traj.sample(sc.trajectory.sample_rate_hz))));
  std::cout << "mean GDOP " << plan.final_cost << " after " << plan.generations << " generations\n";
  return kExitOk;
}

int cmd_simulate(const Options& o)
{
  Scenario sc = load(o);
  sc.realizations = 1;
  RealizationArtifacts art;
  StageClock clock;
  std::mutex mu;
  RunReport rep;
  rep.scenario_name = sc.name;
  rep.scenario_hash = scenario_hash(sc);
  rep.rng_seed = sc.rng_seed;
  rep.realizations = 1;
  rep.rows.push_back(run_realization(sc, 0, &art, &clock, &mu));
  rep.aggregates = compute_aggregates(rep.rows);
  rep.wall_clock_s = clock;

  const fs::path out(o.out);
  write_text(out / "initial_trajectory.csv", trajectory_csv(art.initial_trajectory));
  write_text(out / "initial_ranges.csv", ranges_csv(art.initial_ranges));
  if (sc.stages.rnd_wps)
  {
    write_text(out / "random_wp_trajectory.csv", trajectory_csv(art.random_wp_trajectory));
    write_text(out / "random_wp_ranges.csv", ranges_csv(art.random_wp_ranges));
  }
  if (sc.stages.opt_wps && !art.optimal_waypoints.empty())
  {
    write_text(out / "optimal_wp_trajectory.csv", trajectory_csv(art.optimal_wp_trajectory));
    write_text(out / "optimal_wp_ranges.csv", ranges_csv(art.optimal_wp_ranges));
    EvoResult plan;
    plan.waypoints = art.optimal_waypoints;
    plan.final_cost = rep.rows[0].optimizer_cost;
    plan.generations = rep.rows[0].optimizer_generations;
    std::vector<Vec3> est;
    if (const StageResult* nls = rep.rows[0].find(Stage::NLS))
      for (const auto& a : nls->anchors)
        est.push_back(a.estimate.position);
    write_json(out / "waypoints.json", waypoints_to_json(plan, est));
  }
  return finish_pipeline(sc, rep, o);
}

int cmd_fuse(const Options& o)
{
  const Scenario sc = load(o);
  const auto rep = run_fusion_demo(sc);
  const fs::path out(o.out);
  write_text(out / "state_log.csv", state_log_csv(rep.ranges_on));
  write_text(out / "state_log_ranges_off.csv", state_log_csv(rep.ranges_off));
  write_text(out / "fusion_errors.csv", fusion_error_csv(rep));
  write_json(out / "fusion.json", fusion_to_json(rep));
  std::cout << "position RMSE: ranges on " << rep.rmse_on << " m, ranges off " << rep.rmse_off << " m\n";
  if (rep.has_dropout)
    std::cout << "dropout: terminal error on " << rep.terminal_error_on << " m, off " << rep.terminal_error_off
              << " m; RMSE pre " << rep.pre_dropout_rmse << " m, post " << rep.post_dropout_rmse << " m\n";
  return kExitOk;
}
}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"UWB anchor self-calibration toolkit"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", opt.scenario, "scenario JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "override the scenario rng_seed");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--stages", opt.stages, "comma list of LS,NLS,RndWPS,OptWPS");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
  };

  struct Command
  {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Command commands[] = {
      {"init", "coarse LS and NLS initialization", cmd_init},
      {"plan", "GDOP-optimal waypoints around the scenario anchors", cmd_plan},
      {"simulate", "one realization with trajectory and range logs", cmd_simulate},
      {"montecarlo", "full method comparison over all realizations", cmd_montecarlo},
      {"fuse", "EKF fusion demo with optional camera dropouts", cmd_fuse},
  };
  int (*selected)(const Options&) = nullptr;
  for (const auto& c : commands)
  {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    sub->callback([&selected, fn = c.fn] { selected = fn; });
  }

  CLI11_PARSE(app, argc, argv);
  try
  {
    return selected(opt);
  }
  catch (const Error& e)
  {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return e.code() == ErrorCode::ScenarioInvalid ? kExitScenario : kExitError;
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}
