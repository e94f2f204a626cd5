#ifndef ANCHORMAP_SIM_SIMULATE_HPP_
#define ANCHORMAP_SIM_SIMULATE_HPP_

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "anchormap/range_model.hpp"
#include "anchormap/sim/scenario.hpp"
#include "anchormap/sim/seed.hpp"
#include "anchormap/waypoint/min_snap.hpp"
#include "anchormap/waypoint/volume.hpp"

namespace anchormap::sim
{
struct TimedPoint
{
  double t = 0.0;
  Vec3 position = Vec3::Zero();
};

/// Uniform point inside the volume (rejection sampling against a prism footprint).
template <class Rng>
Vec3 uniform_point(const FlightVolume& volume, Rng& rng, double extent_fraction = 1.0)
{
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int attempt = 0; attempt < 10000; ++attempt)
  {
    const Vec3 p = volume.center + extent_fraction * volume.extent().cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
    if (volume.contains(p))
      return p;
  }
  throw Error(ErrorCode::InvalidArgument, "could not sample a point inside the flight volume");
}

///
/// \brief Straight-line flight from `start` through `spec.random_waypoints` uniform random
/// points at constant speed, sampled every 1 / sample_rate seconds (end point included).
/// No waypoints or zero speed gives a single hover sample at `start`.
///
inline std::vector<TimedPoint> generate_random_trajectory(const FlightVolume& volume, const TrajectorySpec& spec,
                                                          std::uint64_t seed, const Vec3& start)
{
  if (spec.random_waypoints <= 0 || !(spec.speed_mps > 0.0))
    return {{0.0, start}};
  if (!(spec.sample_rate_hz > 0.0))
    throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");

  std::mt19937_64 rng(seed);
  std::vector<Vec3> corners{start};
  for (int i = 0; i < spec.random_waypoints; ++i)
    corners.push_back(uniform_point(volume, rng, spec.extent_fraction));

  std::vector<double> arc{0.0};
  for (std::size_t i = 1; i < corners.size(); ++i)
    arc.push_back(arc.back() + (corners[i] - corners[i - 1]).norm());
  const double total_time = arc.back() / spec.speed_mps;
  const double dt = 1.0 / spec.sample_rate_hz;

  std::vector<TimedPoint> out;
  std::size_t seg = 1;
  const auto n = static_cast<std::size_t>(std::floor(total_time / dt + 1e-9));
  for (std::size_t k = 0; k <= n; ++k)
  {
    const double t = static_cast<double>(k) * dt;
    const double s = std::min(t * spec.speed_mps, arc.back());
    while (seg + 1 < arc.size() && arc[seg] < s)
      ++seg;
    const double len = arc[seg] - arc[seg - 1];
    const double f = len > 0.0 ? (s - arc[seg - 1]) / len : 0.0;
    out.push_back({t, corners[seg - 1] + f * (corners[seg] - corners[seg - 1])});
  }
  return out;
}

inline std::vector<TimedPoint> to_timed_points(std::span<const TrajectorySample> samples)
{
  std::vector<TimedPoint> out;
  out.reserve(samples.size());
  for (const auto& s : samples)
    out.push_back({s.t, s.position});
  return out;
}

/// `count` samples at evenly spaced indices; indices repeat when the input is shorter.
inline std::vector<TimedPoint> subsample_evenly(std::span<const TimedPoint> traj, std::size_t count)
{
  if (traj.empty() || count == 0)
    return {};
  std::vector<TimedPoint> out;
  out.reserve(count);
  const double last = static_cast<double>(traj.size() - 1);
  for (std::size_t k = 0; k < count; ++k)
  {
    const double f = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    out.push_back(traj[static_cast<std::size_t>(std::lround(f * last))]);
  }
  return out;
}

///
/// \brief Noisy ranges z = beta d + gamma + n from every anchor at every trajectory point,
/// with the recorded tag position perturbed by isotropic N(0, sigma_p^2).
///
/// Each anchor draws from its own generator seeded with derive_seed(seed, {anchor id}), so
/// streams of different anchors are independent and adding an anchor leaves the others
/// unchanged. Non-positive ranges are rejected and redrawn.
///
inline std::vector<RangeMeasurement> simulate_ranges(std::span<const TimedPoint> trajectory,
                                                     std::span<const Anchor> anchors, const NoiseSpec& noise,
                                                     std::uint64_t seed)
{
  std::vector<RangeMeasurement> out;
  out.reserve(trajectory.size() * anchors.size());
  for (const auto& a : anchors)
  {
    if (!(a.beta > 0.0))
      throw Error(ErrorCode::InvalidArgument, "anchor beta must be positive");
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(a.id)}));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (const auto& p : trajectory)
    {
      const double truth = predict_range(p.position, a);
      double z = truth + noise.sigma_range * gauss(rng);
      for (int redraw = 0; !(z > 0.0); ++redraw)
      {
        if (redraw > 1000)
          throw Error(ErrorCode::DegenerateGeometry, "cannot draw a positive range");
        z = truth + noise.sigma_range * gauss(rng);
      }
      Vec3 eps(gauss(rng), gauss(rng), gauss(rng));
      out.push_back({a.id, z, p.t, p.position + noise.sigma_position * eps});
    }
  }
  return out;
}

inline std::map<int, std::vector<RangeMeasurement>> group_by_anchor(std::span<const RangeMeasurement> ms)
{
  std::map<int, std::vector<RangeMeasurement>> groups;
  for (const auto& m : ms)
    groups[m.anchor_id].push_back(m);
  return groups;
}

}  // namespace anchormap::sim

#endif  // ANCHORMAP_SIM_SIMULATE_HPP_
