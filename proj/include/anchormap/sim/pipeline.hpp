#ifndef ANCHORMAP_SIM_PIPELINE_HPP_
#define ANCHORMAP_SIM_PIPELINE_HPP_

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "anchormap/coarse_init.hpp"
#include "anchormap/nl_refine.hpp"
#include "anchormap/sim/scenario.hpp"
#include "anchormap/sim/seed.hpp"
#include "anchormap/sim/simulate.hpp"
#include "anchormap/waypoint/evolutionary.hpp"
#include "anchormap/waypoint/min_snap.hpp"

namespace anchormap::sim
{
enum class Stage
{
  LS,
  NLS,
  RndWPS,
  OptWPS,
};

inline constexpr std::array<Stage, 4> kAllStages{Stage::LS, Stage::NLS, Stage::RndWPS, Stage::OptWPS};

constexpr const char* to_string(Stage s)
{
  switch (s)
  {
    case Stage::LS:
      return "LS";
    case Stage::NLS:
      return "NLS";
    case Stage::RndWPS:
      return "RndWPS";
    case Stage::OptWPS:
      return "OptWPS";
  }
  return "?";
}

inline Stage stage_from_string(const std::string& s)
{
  for (Stage st : kAllStages)
    if (s == to_string(st))
      return st;
  throw Error(ErrorCode::InvalidArgument, "unknown stage " + s);
}

inline bool stage_enabled(const StageToggles& t, Stage s)
{
  switch (s)
  {
    case Stage::LS:
      return t.ls;
    case Stage::NLS:
      return t.nls;
    case Stage::RndWPS:
      return t.rnd_wps;
    case Stage::OptWPS:
      return t.opt_wps;
  }
  return false;
}

struct AnchorStageResult
{
  int anchor_id = 0;
  bool ok = false;
  /// NaN when the stage failed for this anchor
  double position_error = std::numeric_limits<double>::quiet_NaN();
  double gamma_error = std::numeric_limits<double>::quiet_NaN();
  double beta_error = std::numeric_limits<double>::quiet_NaN();
  AnchorParams estimate;
  std::string error;
};

struct StageResult
{
  Stage stage = Stage::LS;
  std::size_t samples = 0;
  std::vector<AnchorStageResult> anchors;

  /// Mean position error over the anchors that succeeded.
  std::optional<double> mean_position_error() const
  {
    double sum = 0.0;
    int n = 0;
    for (const auto& a : anchors)
      if (a.ok)
      {
        sum += a.position_error;
        ++n;
      }
    if (n == 0)
      return std::nullopt;
    return sum / n;
  }
};

struct RealizationResult
{
  int index = 0;
  std::vector<StageResult> stages;
  /// NaN when the optimal-waypoint stage did not run
  double optimizer_cost = std::numeric_limits<double>::quiet_NaN();
  int optimizer_generations = 0;

  const StageResult* find(Stage s) const
  {
    for (const auto& st : stages)
      if (st.stage == s)
        return &st;
    return nullptr;
  }
};

/// Mean and sample standard deviation over realizations of the anchor-averaged position error.
struct StageAggregate
{
  Stage stage = Stage::LS;
  int count = 0;
  double mean_position_error = std::numeric_limits<double>::quiet_NaN();
  double std_position_error = std::numeric_limits<double>::quiet_NaN();
};

struct RunReport
{
  int schema_version = 1;
  std::string scenario_name;
  std::string scenario_hash;
  std::uint64_t rng_seed = 0;
  int realizations = 0;
  std::vector<RealizationResult> rows;
  std::vector<StageAggregate> aggregates;
  /// accumulated seconds per stage; not part of the reproducible payload
  std::map<std::string, double> wall_clock_s;

  const StageAggregate* aggregate(Stage s) const
  {
    for (const auto& a : aggregates)
      if (a.stage == s)
        return &a;
    return nullptr;
  }
};

inline std::vector<StageAggregate> compute_aggregates(const std::vector<RealizationResult>& rows)
{
  std::vector<StageAggregate> out;
  for (Stage s : kAllStages)
  {
    std::vector<double> values;
    for (const auto& r : rows)
      if (const StageResult* st = r.find(s))
        if (auto m = st->mean_position_error())
          values.push_back(*m);
    bool present = false;
    for (const auto& r : rows)
      present = present || r.find(s) != nullptr;
    if (!present)
      continue;
    StageAggregate agg;
    agg.stage = s;
    agg.count = static_cast<int>(values.size());
    if (!values.empty())
    {
      double sum = 0.0;
      for (double v : values)
        sum += v;
      agg.mean_position_error = sum / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values)
        ss += (v - agg.mean_position_error) * (v - agg.mean_position_error);
      agg.std_position_error = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    }
    out.push_back(agg);
  }
  return out;
}

/// Intermediate products of one realization, kept for the `simulate` command.
struct RealizationArtifacts
{
  std::vector<TimedPoint> initial_trajectory;
  std::vector<TimedPoint> random_wp_trajectory;
  std::vector<TimedPoint> optimal_wp_trajectory;
  std::vector<Vec3> random_waypoints;
  std::vector<Vec3> optimal_waypoints;
  std::vector<RangeMeasurement> initial_ranges;
  std::vector<RangeMeasurement> random_wp_ranges;
  std::vector<RangeMeasurement> optimal_wp_ranges;
};

using StageClock = std::map<std::string, double>;

namespace detail
{
inline AnchorStageResult score(const Anchor& truth, const AnchorParams& est)
{
  AnchorStageResult r;
  r.anchor_id = truth.id;
  r.ok = true;
  r.estimate = est;
  r.position_error = (est.position - truth.position).norm();
  r.gamma_error = std::abs(est.gamma - truth.gamma);
  r.beta_error = std::abs(est.beta - truth.beta);
  return r;
}

inline AnchorStageResult failed(int id, const std::string& what)
{
  AnchorStageResult r;
  r.anchor_id = id;
  r.error = what;
  return r;
}

class ScopedTimer
{
public:
  ScopedTimer(StageClock& clock, std::mutex& mu, std::string key)
    : clock_(clock), mu_(mu), key_(std::move(key)), t0_(std::chrono::steady_clock::now())
  {
  }
  ~ScopedTimer()
  {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    std::lock_guard lock(mu_);
    clock_[key_] += s;
  }

private:
  StageClock& clock_;
  std::mutex& mu_;
  std::string key_;
  std::chrono::steady_clock::time_point t0_;
};
}  // namespace detail

///
/// \brief One realization of the initialization comparison.
///
/// LS and NLS run on the data of a random initial flight. The random- and optimal-waypoint
/// stages each fly a new min-snap trajectory from the end of that flight, collect the same
/// number of samples, and refine starting from the NLS estimate.
///
inline RealizationResult run_realization(const Scenario& sc, int r, RealizationArtifacts* art = nullptr,
                                         StageClock* clock = nullptr, std::mutex* clock_mu = nullptr)
{
  StageClock local_clock;
  std::mutex local_mu;
  StageClock& clk = clock ? *clock : local_clock;
  std::mutex& mu = clock_mu ? *clock_mu : local_mu;
  const auto ri = static_cast<std::uint64_t>(r);
  const auto S = static_cast<std::size_t>(sc.samples_per_stage);

  RealizationResult out;
  out.index = r;

  const auto traj0 = generate_random_trajectory(sc.volume, sc.trajectory,
                                                derive_seed(sc.rng_seed, {ri, kInitialTrajectory}), sc.volume.center);
  const auto data0 = subsample_evenly(traj0, S);
  const auto ranges0 = simulate_ranges(data0, sc.anchors, sc.noise, derive_seed(sc.rng_seed, {ri, kInitialRanges}));
  const auto groups0 = group_by_anchor(ranges0);
  if (art)
  {
    art->initial_trajectory = traj0;
    art->initial_ranges = ranges0;
  }

  std::map<int, AnchorParams> estimate;
  for (const auto& a : sc.anchors)
    estimate[a.id] = AnchorParams{sc.volume.center, 0.0, 1.0};

  if (sc.stages.ls)
  {
    detail::ScopedTimer timer(clk, mu, "LS");
    StageResult st{Stage::LS, S, {}};
    for (const auto& a : sc.anchors)
    {
      try
      {
        const auto sol = solve_coarse(groups0.at(a.id), sc.noise);
        estimate[a.id] = AnchorParams{sol.anchor_position, sol.gamma, 1.0};
        st.anchors.push_back(detail::score(a, estimate[a.id]));
      }
      catch (const Error& e)
      {
        st.anchors.push_back(detail::failed(a.id, e.what()));
      }
    }
    out.stages.push_back(std::move(st));
  }

  auto refine_stage = [&](Stage stage, const std::map<int, std::vector<RangeMeasurement>>& groups) {
    StageResult st{stage, S, {}};
    std::map<int, AnchorParams> refined;
    const auto outcomes = refine_all(estimate, groups, sc.lm);
    for (const auto& o : outcomes)
    {
      const Anchor* truth = nullptr;
      for (const auto& a : sc.anchors)
        if (a.id == o.anchor_id)
          truth = &a;
      if (o.solution)
      {
        st.anchors.push_back(detail::score(*truth, o.solution->params));
        refined[o.anchor_id] = o.solution->params;
      }
      else
        st.anchors.push_back(detail::failed(o.anchor_id, o.error ? o.error->what() : "unknown"));
    }
    return std::make_pair(std::move(st), std::move(refined));
  };

  if (sc.stages.nls)
  {
    detail::ScopedTimer timer(clk, mu, "NLS");
    auto [st, refined] = refine_stage(Stage::NLS, groups0);
    for (const auto& [id, p] : refined)
      estimate[id] = p;
    out.stages.push_back(std::move(st));
  }

  const Vec3 tag_now = data0.back().position;
  // Fly through `wps` from the current tag position and simulate S samples along the way.
  auto fly = [&](const std::vector<Vec3>& wps, std::uint64_t range_seed, std::vector<TimedPoint>* traj_out,
                 std::vector<RangeMeasurement>* ranges_out) {
    const auto ordered = nearest_neighbor_order(wps, tag_now);
    std::vector<Vec3> chain{tag_now};
    chain.insert(chain.end(), ordered.begin(), ordered.end());
    const auto times = segment_times_by_distance(chain, sc.waypoint_speed_mps);
    const auto traj = to_timed_points(min_snap_trajectory(ordered, tag_now, times).sample(sc.trajectory.sample_rate_hz));
    const auto data = subsample_evenly(traj, S);
    auto ranges = simulate_ranges(data, sc.anchors, sc.noise, range_seed);
    if (traj_out)
      *traj_out = traj;
    auto groups = group_by_anchor(ranges);
    if (ranges_out)
      *ranges_out = std::move(ranges);
    return groups;
  };

  const int n_wp = sc.volume.waypoint_count();
  if (sc.stages.rnd_wps)
  {
    detail::ScopedTimer timer(clk, mu, "RndWPS");
    std::mt19937_64 rng(derive_seed(sc.rng_seed, {ri, kRandomWaypoints}));
    std::vector<Vec3> wps;
    for (int i = 0; i < n_wp; ++i)
      wps.push_back(uniform_point(sc.volume, rng));
    const auto groups = fly(wps, derive_seed(sc.rng_seed, {ri, kRandomWaypointRanges}),
                            art ? &art->random_wp_trajectory : nullptr, art ? &art->random_wp_ranges : nullptr);
    if (art)
      art->random_waypoints = wps;
    out.stages.push_back(refine_stage(Stage::RndWPS, groups).first);
  }

  if (sc.stages.opt_wps)
  {
    detail::ScopedTimer timer(clk, mu, "OptWPS");
    std::vector<Vec3> anchor_est;
    for (const auto& [id, p] : estimate)
      anchor_est.push_back(p.position);
    EvoConfig evo = sc.evo;
    evo.rng_seed = derive_seed(sc.rng_seed, {ri, kOptimizer});
    try
    {
      const auto plan = optimize_waypoints(sc.volume, anchor_est, tag_now, evo);
      out.optimizer_cost = plan.final_cost;
      out.optimizer_generations = plan.generations;
      const auto groups = fly(plan.waypoints, derive_seed(sc.rng_seed, {ri, kOptimalWaypointRanges}),
                              art ? &art->optimal_wp_trajectory : nullptr, art ? &art->optimal_wp_ranges : nullptr);
      if (art)
        art->optimal_waypoints = plan.waypoints;
      out.stages.push_back(refine_stage(Stage::OptWPS, groups).first);
    }
    catch (const Error& e)
    {
      StageResult st{Stage::OptWPS, S, {}};
      for (const auto& a : sc.anchors)
        st.anchors.push_back(detail::failed(a.id, e.what()));
      out.stages.push_back(std::move(st));
    }
  }
  return out;
}

///
/// \brief Runs every realization of the scenario on up to `threads` workers. All seeds are
/// derived from (rng_seed, realization, stream) before dispatch and rows are stored by
/// realization index, so the report does not depend on the thread count.
///
inline RunReport run_pipeline(const Scenario& sc, int threads = 1)
{
  validate(sc);
  RunReport rep;
  rep.scenario_name = sc.name;
  rep.scenario_hash = scenario_hash(sc);
  rep.rng_seed = sc.rng_seed;
  rep.realizations = sc.realizations;
  rep.rows.resize(static_cast<std::size_t>(sc.realizations));

  std::mutex clock_mu;
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < sc.realizations; r = next++)
      rep.rows[static_cast<std::size_t>(r)] = run_realization(sc, r, nullptr, &rep.wall_clock_s, &clock_mu);
  };
  const int n_threads = std::clamp(threads, 1, sc.realizations);
  if (n_threads == 1)
    worker();
  else
  {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back(worker);
    for (auto& t : pool)
      t.join();
  }
  rep.aggregates = compute_aggregates(rep.rows);
  return rep;
}

/// True when an enabled stage produced no successful anchor in any realization.
inline bool stage_failed_everywhere(const RunReport& rep, const StageToggles& toggles)
{
  for (Stage s : kAllStages)
  {
    if (!stage_enabled(toggles, s))
      continue;
    const StageAggregate* agg = rep.aggregate(s);
    if (!agg || agg->count == 0)
      return true;
  }
  return false;
}

}  // namespace anchormap::sim

#endif  // ANCHORMAP_SIM_PIPELINE_HPP_
