// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
// Usage: anchormap_acceptance <scenario dir>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "anchormap/anchormap.hpp"

using namespace anchormap;
using namespace anchormap::sim;
namespace fs = std::filesystem;

namespace
{
using Rng = std::mt19937_64;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Vec3 random_vec(Rng& rng, double lo, double hi) { return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)}; }

Vec3 random_unit(Rng& rng)
{
  std::normal_distribution<double> g;
  return Vec3(g(rng), g(rng), g(rng)).normalized();
}

Anchor random_anchor(Rng& rng) { return {1, random_vec(rng, -5, 5), uniform(rng, 0.9, 1.1), uniform(rng, -0.5, 0.5)}; }

std::vector<RangeMeasurement> exact_samples(const Anchor& a, int n, Rng& rng)
{
  std::vector<RangeMeasurement> out;
  for (int i = 0; i < n; ++i)
  {
    const Vec3 p = random_vec(rng, -3, 3);
    out.push_back({a.id, predict_range(p, a), double(i), p});
  }
  return out;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

double block_rel(const Vec3& a, const Vec3& b)
{
  const double s = std::max(a.norm(), b.norm());
  return s < 1e-9 ? (a - b).norm() : (a - b).norm() / s;
}

struct Outcome
{
  bool pass = false;
  std::string detail;
};

// AC1
Outcome method_ordering(const fs::path& dir)
{
  const Scenario sc = load_scenario((dir / "benchmark.json").string());
  const auto t0 = Clock::now();
  const RunReport rep = run_pipeline(sc);
  const double secs = seconds_since(t0);
  const auto* ls = rep.aggregate(Stage::LS);
  const auto* nls = rep.aggregate(Stage::NLS);
  const auto* rnd = rep.aggregate(Stage::RndWPS);
  const auto* opt = rep.aggregate(Stage::OptWPS);
  if (!ls || !nls || !rnd || !opt)
    return {false, "missing stage aggregate"};
  std::ostringstream os;
  os.precision(4);
  os << "realizations=" << rep.realizations << " mean LS=" << ls->mean_position_error
     << " NLS=" << nls->mean_position_error << " RndWPS=" << rnd->mean_position_error
     << " OptWPS=" << opt->mean_position_error << " std RndWPS=" << rnd->std_position_error
     << " OptWPS=" << opt->std_position_error << " m; runtime " << secs << " s";
  const bool ordered = opt->mean_position_error <= rnd->mean_position_error &&
                       rnd->mean_position_error <= nls->mean_position_error &&
                       nls->mean_position_error <= ls->mean_position_error;
  const bool mean_gain = opt->mean_position_error <= 0.8 * rnd->mean_position_error;
  const bool std_gain = opt->std_position_error <= 0.8 * rnd->std_position_error;
  const bool complete = sc.realizations == 100 && sc.anchors.size() == 5 && opt->count == rep.realizations;
  return {ordered && mean_gain && std_gain && complete && secs < 300.0, os.str()};
}

// AC2
Outcome gdop_identity()
{
  Rng rng(2002);
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial)
  {
    const Vec3 anchor = random_vec(rng, -5, 5);
    std::vector<Vec3> wps;
    for (int i = 0; i < 4; ++i)
      wps.push_back(anchor + uniform(rng, 0.5, 6.0) * random_unit(rng));
    const auto c = det_identity_check(anchor, wps);
    const double scale = std::max(std::abs(c.numeric), 1e-12);
    worst = std::max(worst, std::abs(c.closed_form - c.numeric) / scale);
  }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "worst relative diff " << worst << " over 100 configs in " << secs << " s";
  return {worst <= 1e-9 && secs < 1.0, os.str()};
}

// AC3
Outcome jacobian_blocks()
{
  Rng rng(3003);
  const auto t0 = Clock::now();
  double worst = 0.0;
  int done = 0;
  const double h = 1e-6;
  while (done < 1000)
  {
    const Vec3 p = random_vec(rng, -3, 3);
    const Rotation R = Rotation::from_axis_angle(random_unit(rng), uniform(rng, -3.1, 3.1));
    const Vec3 u = random_vec(rng, -0.5, 0.5);
    const Anchor a = random_anchor(rng);
    if ((tag_position(p, R, u) - a.position).norm() < 0.5)
      continue;
    const auto J = range_jacobian(p, R, u, a);
    Vec3 dv, dt, da, dr;
    for (int k = 0; k < 3; ++k)
    {
      const Vec3 e = h * Vec3::Unit(k);
      dv(k) = (predict_range(p + e, R, u, a) - predict_range(p - e, R, u, a)) / (2 * h);
      dt(k) = (predict_range(p, R, u + e, a) - predict_range(p, R, u - e, a)) / (2 * h);
      Anchor ap = a, am = a;
      ap.position += e;
      am.position -= e;
      da(k) = (predict_range(p, R, u, ap) - predict_range(p, R, u, am)) / (2 * h);
      dr(k) = (predict_range(p, R.perturbed(e), u, a) - predict_range(p, R.perturbed(-e), u, a)) / (2 * h);
    }
    Anchor bp = a, bm = a, gp = a, gm = a;
    bp.beta += h;
    bm.beta -= h;
    gp.gamma += h;
    gm.gamma -= h;
    const double db = (predict_range(p, R, u, bp) - predict_range(p, R, u, bm)) / (2 * h);
    const double dg = (predict_range(p, R, u, gp) - predict_range(p, R, u, gm)) / (2 * h);
    worst = std::max({worst, block_rel(J.d_vehicle_position, dv), block_rel(J.d_tag_offset, dt),
                      block_rel(J.d_anchor_position, da), block_rel(J.d_rotation, dr), rel(J.d_beta, db),
                      rel(J.d_gamma, dg)});
    ++done;
  }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "worst relative diff " << worst << " over 1000 configs in " << secs << " s";
  return {worst <= 1e-5 && secs < 1.0, os.str()};
}

std::size_t brute_force_pivot(const std::vector<RangeMeasurement>& s, const NoiseSpec& n)
{
  std::size_t best = 0;
  double best_trace = -1.0;
  for (std::size_t p = 0; p < s.size(); ++p)
  {
    Eigen::Matrix4d info = Eigen::Matrix4d::Zero();
    for (std::size_t k = 0; k < s.size(); ++k)
    {
      if (k == p)
        continue;
      Eigen::Vector4d a;
      a << -(s[k].tag_position - s[p].tag_position), s[k].range - s[p].range;
      const double var = (s[k].range * s[k].range + s[p].range * s[p].range) * n.sigma_range * n.sigma_range +
                         n.sigma_position * n.sigma_position *
                             (s[k].tag_position.squaredNorm() + s[p].tag_position.squaredNorm());
      info += a * a.transpose() / std::max(var, 1e-12);
    }
    if (info.trace() > best_trace)
    {
      best_trace = info.trace();
      best = p;
    }
  }
  return best;
}

// AC4
Outcome coarse_exactness()
{
  Rng rng(4004);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial)
  {
    Anchor a = random_anchor(rng);
    a.beta = 1.0;
    const auto s = exact_samples(a, 30, rng);
    const auto sol = solve_coarse(s, {0.3, 0.03});
    worst = std::max({worst, (sol.anchor_position - a.position).norm(), std::abs(sol.gamma - a.gamma)});
  }
  int matches = 0;
  std::normal_distribution<double> g(0.0, 0.3);
  for (int trial = 0; trial < 100; ++trial)
  {
    const Anchor a = random_anchor(rng);
    auto s = exact_samples(a, 10, rng);
    for (auto& m : s)
      m.range += g(rng);
    const NoiseSpec n{0.3, 0.03};
    matches += select_pivot(s, n) == brute_force_pivot(s, n);
  }
  std::ostringstream os;
  os << "worst noiseless error " << worst << " m over 100 geometries; pivot matches " << matches << "/100";
  return {worst <= 1e-9 && matches == 100, os.str()};
}

// AC5
Outcome lm_convergence()
{
  Rng rng(5005);
  int converged = 0;
  bool monotone = true;
  int max_iters = 0;
  for (int trial = 0; trial < 100; ++trial)
  {
    const Anchor a = random_anchor(rng);
    const auto s = exact_samples(a, 40, rng);
    const double sg = uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0;
    const double sb = uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0;
    const AnchorParams start{a.position + 0.5 * random_unit(rng), a.gamma + 0.2 * sg, a.beta * (1.0 + 0.03 * sb)};
    const auto sol = refine(start, s);
    const double err = std::max({(sol.params.position - a.position).norm(), std::abs(sol.params.gamma - a.gamma),
                                 std::abs(sol.params.beta - a.beta)});
    if (err <= 1e-6 && sol.iterations <= 50)
      ++converged;
    max_iters = std::max(max_iters, sol.iterations);
    for (std::size_t i = 1; i < sol.accepted_costs.size(); ++i)
      monotone = monotone && sol.accepted_costs[i] <= sol.accepted_costs[i - 1];
  }
  std::ostringstream os;
  os << converged << "/100 converged within 1e-6 in <= 50 iterations (max " << max_iters
     << "); accepted costs monotone: " << (monotone ? "yes" : "no");
  return {converged >= 95 && monotone, os.str()};
}

// AC6
Outcome optimizer_quality(const fs::path& dir)
{
  const Scenario sc = load_scenario((dir / "benchmark.json").string());
  std::vector<Vec3> anchors;
  for (std::size_t i = 0; i < 4; ++i)
    anchors.push_back(sc.anchors[i].position);
  double evo_sum = 0.0, random_sum = 0.0;
  bool non_increasing = true;
  for (int run = 0; run < 20; ++run)
  {
    EvoConfig cfg = sc.evo;
    cfg.rng_seed = derive_seed(6006, {static_cast<std::uint64_t>(run), kOptimizer});
    const auto res = optimize_waypoints(sc.volume, anchors, sc.volume.center, cfg);
    evo_sum += res.final_cost;
    for (std::size_t g = 1; g < res.best_cost_history.size(); ++g)
      non_increasing = non_increasing && res.best_cost_history[g] <= res.best_cost_history[g - 1];

    Rng rng(derive_seed(6006, {static_cast<std::uint64_t>(run), kRandomWaypoints}));
    double best = kInfeasibleCost;
    for (int k = 0; k < 500; ++k)
      best = std::min(best, objective(decode(sc.volume, random_chromosome(sc.volume, rng)), anchors, sc.volume));
    random_sum += best;
  }
  std::ostringstream os;
  os << "mean evolutionary cost " << evo_sum / 20 << " vs mean best-of-500 random " << random_sum / 20
     << "; history non-increasing: " << (non_increasing ? "yes" : "no");
  return {evo_sum <= random_sum && non_increasing, os.str()};
}

// AC7: state at t1, ranges at t2 and t3, camera at t4.
Outcome delayed_update()
{
  using namespace anchormap::ekf;
  AnchorRegistry reg;
  reg.add({1, Vec3(5, 0, 1), 1.0, 0.0}, AnchorMode::Fixed);
  reg.add({2, Vec3(-4, 3, 2), 1.0, 0.0}, AnchorMode::Fixed);
  reg.add({3, Vec3(0.3, -4.8, 3.9), 1.02, 0.1}, AnchorMode::OnlineRefined);
  InitialUncertainty sig;
  sig.sigma_pose_drift = 0.02;
  auto s = make_state(1.0, Vec3(0.2, -0.1, 1.5), Vec3(0.5, 0.1, -0.2), Vec3(0.05, 0, -0.03), reg, sig);
  s.rot_IG = Rotation::from_axis_angle(Vec3(0.1, 0.2, 1.0), 0.4);
  const double t1 = s.time, t2 = 1.03, t3 = 1.07, t4 = 1.1;
  const RangeMeasurement z2{3, 5.2, t2, Vec3::Zero()}, z3{2, 5.6, t3, Vec3::Zero()};
  const PoseMeasurement pose{Vec3(0.27, -0.08, 1.47), 0.05};
  FusionConfig cfg;
  cfg.accel_psd = 0.7;
  cfg.drift_psd = 1e-3;
  cfg.sigma_range = 0.15;

  MeasurementBuffer buf(t1);
  buf.push(z2);
  buf.push(z3);
  std::vector<FlushEvent> trace;
  const auto out = delayed_flush(s, reg, buf, t4, pose, cfg, &trace);
  using K = FlushEvent::Kind;
  const std::vector<FlushEvent> expected{{K::Propagate, t1, t2, -1}, {K::RangeUpdate, t2, t2, 3},
                                         {K::Propagate, t2, t3, -1}, {K::RangeUpdate, t3, t3, 2},
                                         {K::Propagate, t3, t4, -1}, {K::PoseUpdate, t4, t4, -1}};
  auto r = propagate(s, t2 - t1, 0.7, 1e-3);
  r = range_update(r, reg, z2, 0.15);
  r = propagate(r, t3 - t2, 0.7, 1e-3);
  r = range_update(r, reg, z3, 0.15);
  r = propagate(r, t4 - t3, 0.7, 1e-3);
  r = pose_update(r, pose.position, 0.05);
  const double diff = std::max((out.mean() - r.mean()).cwiseAbs().maxCoeff(),
                               (out.covariance - r.covariance).cwiseAbs().maxCoeff());
  std::ostringstream os;
  os << "trace " << (trace == expected ? "matches" : "differs") << " (" << trace.size()
     << " events); replay max diff " << diff;
  return {trace == expected && diff <= 1e-9, os.str()};
}

// AC8
Outcome dropout_resilience(const fs::path& dir)
{
  const Scenario sc = load_scenario((dir / "fusion_dropout.json").string());
  const auto f = run_fusion_demo(sc);
  double longest = 0.0;
  for (const auto& d : sc.fusion.dropouts)
    longest = std::max(longest, d.end - d.start);
  const double ratio = f.terminal_error_off / f.terminal_error_on;
  std::ostringstream os;
  os.precision(4);
  os << "terminal error on " << f.terminal_error_on << " m, off " << f.terminal_error_off << " m (ratio " << ratio
     << "); pre-dropout RMSE " << f.pre_dropout_rmse << " m, post " << f.post_dropout_rmse << " m";
  const bool setup = f.has_dropout && longest >= 10.0 && sc.anchors.size() - sc.fusion.online_anchor_ids.size() >= 3;
  return {setup && ratio >= 5.0 && f.post_dropout_rmse < 2.0 * f.pre_dropout_rmse, os.str()};
}

std::string read_bytes(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string strip_timing(const fs::path& p)
{
  auto j = nlohmann::json::parse(read_bytes(p));
  j.erase("timing");
  return j.dump(2);
}

// AC9
Outcome determinism(const fs::path& dir)
{
  Scenario sc = load_scenario((dir / "smoke.json").string());
  sc.realizations = 5;
  const fs::path base = fs::temp_directory_path() / "anchormap_acceptance_det";
  fs::remove_all(base);
  emit_report(run_pipeline(sc), base / "a");
  emit_report(run_pipeline(sc), base / "b");
  const bool json_same = strip_timing(base / "a" / "results.json") == strip_timing(base / "b" / "results.json");
  const bool csv_same = read_bytes(base / "a" / "results.csv") == read_bytes(base / "b" / "results.csv");
  fs::remove_all(base);
  std::ostringstream os;
  os << "results.json without timing " << (json_same ? "identical" : "differs") << ", results.csv "
     << (csv_same ? "identical" : "differs") << " across two runs of " << sc.realizations << " realizations";
  return {json_same && csv_same, os.str()};
}
}  // namespace

int main(int argc, char** argv)
{
  const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::path("scenarios");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1", [&] { return method_ordering(dir); }},
      {"AC2", gdop_identity},
      {"AC3", jacobian_blocks},
      {"AC4", coarse_exactness},
      {"AC5", lm_convergence},
      {"AC6", [&] { return optimizer_quality(dir); }},
      {"AC7", delayed_update},
      {"AC8", [&] { return dropout_resilience(dir); }},
      {"AC9", [&] { return determinism(dir); }},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria)
  {
    Outcome o;
    try
    {
      o = check();
    }
    catch (const std::exception& e)
    {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
