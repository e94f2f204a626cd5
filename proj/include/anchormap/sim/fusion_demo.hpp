#ifndef ANCHORMAP_SIM_FUSION_DEMO_HPP_
#define ANCHORMAP_SIM_FUSION_DEMO_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "anchormap/ekf/filter.hpp"
#include "anchormap/sim/scenario.hpp"
#include "anchormap/sim/seed.hpp"

namespace anchormap::sim
{
struct StateLogRow
{
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double trace_P = 0.0;
  std::vector<ekf::AnchorBlock> anchors;
};

struct FusionRun
{
  std::vector<double> t;
  /// position error at each camera time
  std::vector<double> error;
  std::vector<StateLogRow> log;
};

struct FusionReport
{
  FusionRun ranges_on;
  FusionRun ranges_off;
  double rmse_on = 0.0;
  double rmse_off = 0.0;
  /// 1 - rmse_on / rmse_off
  double rmse_reduction = 0.0;
  bool has_dropout = false;
  /// steady-state RMSE (ranges on) over the window before the first dropout
  double pre_dropout_rmse = 0.0;
  /// RMSE (ranges on) over the window after the first dropout, once settled
  double post_dropout_rmse = 0.0;
  /// errors at the last camera time of the first dropout (end of run without dropout)
  double terminal_error_on = 0.0;
  double terminal_error_off = 0.0;
  double settle_s = 0.0;
  double window_s = 0.0;
};

/// Lissajous truth motion filling most of the flight volume.
struct LissajousMotion
{
  Vec3 center = Vec3::Zero();
  Vec3 amplitude = Vec3::Ones();
  double omega = 1.0;

  LissajousMotion(const FlightVolume& volume, double period_s)
    : center(volume.center),
      amplitude(0.35 * volume.length, 0.35 * volume.width, 0.3 * volume.height),
      omega(2.0 * std::numbers::pi / period_s)
  {
  }

  Vec3 position(double t) const
  {
    return center + Vec3(amplitude.x() * std::sin(omega * t), amplitude.y() * std::sin(2.0 * omega * t),
                         amplitude.z() * std::sin(0.5 * omega * t));
  }

  Vec3 velocity(double t) const
  {
    return Vec3(amplitude.x() * omega * std::cos(omega * t), 2.0 * amplitude.y() * omega * std::cos(2.0 * omega * t),
                0.5 * amplitude.z() * omega * std::cos(0.5 * omega * t));
  }
};

namespace detail
{
struct FusionStreams
{
  std::vector<ekf::CameraEvent> camera;
  std::vector<RangeMeasurement> ranges;
};

inline double rmse_between(const FusionRun& run, double t0, double t1)
{
  double ss = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < run.t.size(); ++i)
    if (run.t[i] >= t0 && run.t[i] < t1)
    {
      ss += run.error[i] * run.error[i];
      ++n;
    }
  return n > 0 ? std::sqrt(ss / n) : std::numeric_limits<double>::quiet_NaN();
}

inline double error_at_or_before(const FusionRun& run, double t)
{
  double e = run.error.empty() ? 0.0 : run.error.front();
  for (std::size_t i = 0; i < run.t.size() && run.t[i] <= t + 1e-12; ++i)
    e = run.error[i];
  return e;
}
}  // namespace detail

///
/// \brief Measurement streams for the fusion demo: VIO-like position fixes at the camera
/// rate (truth + random-walk drift + white noise) and round-robin ranges from all anchors at
/// the range rate, offset by half a period so they never coincide with camera times.
///
inline detail::FusionStreams make_fusion_streams(const Scenario& sc, const Rotation& rot_IG, std::uint64_t seed)
{
  const auto& f = sc.fusion;
  const LissajousMotion motion(sc.volume, f.motion_period_s);
  detail::FusionStreams out;

  std::mt19937_64 pose_rng(derive_seed(seed, {kFusionPose}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double dt_cam = 1.0 / f.camera_rate_hz;
  Vec3 drift = Vec3::Zero();
  const auto n_cam = static_cast<int>(std::floor(f.duration_s * f.camera_rate_hz + 1e-9));
  for (int k = 1; k <= n_cam; ++k)
  {
    const double t = k * dt_cam;
    drift += f.pose_drift_m_per_sqrt_s * std::sqrt(dt_cam) * Vec3(gauss(pose_rng), gauss(pose_rng), gauss(pose_rng));
    const Vec3 white(gauss(pose_rng), gauss(pose_rng), gauss(pose_rng));
    out.camera.push_back({t, ekf::PoseMeasurement{motion.position(t) + drift + f.pose_sigma_m * white, f.pose_sigma_m}});
  }

  std::mt19937_64 range_rng(derive_seed(seed, {kFusionRanges}));
  const double dt_rng = 1.0 / f.range_rate_hz;
  const auto n_rng = static_cast<int>(std::floor(f.duration_s * f.range_rate_hz - 0.5 + 1e-9));
  for (int j = 0; j <= n_rng; ++j)
  {
    const double t = (j + 0.5) * dt_rng;
    if (t > f.duration_s)
      break;
    const Anchor& a = sc.anchors[static_cast<std::size_t>(j) % sc.anchors.size()];
    const double truth = predict_range(motion.position(t), rot_IG, f.tag_offset, a);
    out.ranges.push_back({a.id, truth + f.sigma_range_m * gauss(range_rng), t, Vec3::Zero()});
  }
  return out;
}

///
/// \brief Paired EKF runs over the same measurement streams, one fusing ranges and one
/// using the pose fixes only. Anchors listed in fusion.online_anchor_ids start from a
/// perturbed estimate and are refined online; all others are fixed at their true values.
///
inline FusionReport run_fusion_demo(const Scenario& sc, std::optional<std::uint64_t> seed_override = std::nullopt)
{
  validate(sc);
  const auto& f = sc.fusion;
  const std::uint64_t seed = seed_override.value_or(sc.rng_seed);
  const Rotation rot_IG = Rotation::from_axis_angle(Vec3::UnitZ(), std::numbers::pi / 6.0);
  const LissajousMotion motion(sc.volume, f.motion_period_s);
  const auto streams = make_fusion_streams(sc, rot_IG, seed);
  const auto camera = ekf::inject_dropout(f.dropouts, streams.camera);

  ekf::AnchorRegistry registry;
  std::mt19937_64 place_rng(derive_seed(seed, {kAnchorPlacement}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const auto& a : sc.anchors)
  {
    const bool online = std::find(f.online_anchor_ids.begin(), f.online_anchor_ids.end(), a.id) != f.online_anchor_ids.end();
    Anchor init = a;
    if (online)
    {
      const Vec3 dir = Vec3(gauss(place_rng), gauss(place_rng), gauss(place_rng)).normalized();
      init.position += f.online_init_error_m * dir;
    }
    registry.add(init, online ? ekf::AnchorMode::OnlineRefined : ekf::AnchorMode::Fixed);
  }

  ekf::InitialUncertainty sig;
  sig.sigma_anchor_position = std::max(f.online_init_error_m, 1e-3);
  ekf::FusionConfig cfg;
  cfg.accel_psd = f.accel_psd;
  cfg.drift_psd = f.pose_drift_m_per_sqrt_s * f.pose_drift_m_per_sqrt_s;
  cfg.sigma_range = f.sigma_range_m;

  auto run = [&](bool use_ranges) {
    FusionRun out;
    auto state = ekf::make_state(0.0, motion.position(0.0), motion.velocity(0.0), f.tag_offset, registry, sig);
    state.rot_IG = rot_IG;
    ekf::MeasurementBuffer buffer(0.0);
    std::size_t next_range = 0;
    for (const auto& ev : camera)
    {
      for (; next_range < streams.ranges.size() && streams.ranges[next_range].timestamp <= ev.t; ++next_range)
        if (use_ranges)
          buffer.push(streams.ranges[next_range]);
      state = ekf::delayed_flush(std::move(state), registry, buffer, ev.t, ev.pose, cfg);
      out.t.push_back(ev.t);
      out.error.push_back((state.position - motion.position(ev.t)).norm());
      out.log.push_back({ev.t, state.position, state.velocity, state.covariance.trace(), state.anchors});
    }
    return out;
  };

  FusionReport rep;
  rep.ranges_on = run(true);
  rep.ranges_off = run(false);
  rep.rmse_on = detail::rmse_between(rep.ranges_on, 0.0, f.duration_s + 1.0);
  rep.rmse_off = detail::rmse_between(rep.ranges_off, 0.0, f.duration_s + 1.0);
  rep.rmse_reduction = rep.rmse_off > 0.0 ? 1.0 - rep.rmse_on / rep.rmse_off : 0.0;

  rep.settle_s = 5.0;
  rep.window_s = 10.0;
  if (!f.dropouts.empty())
  {
    const auto& d = f.dropouts.front();
    rep.has_dropout = true;
    rep.pre_dropout_rmse = detail::rmse_between(rep.ranges_on, std::max(rep.settle_s, d.start - rep.window_s), d.start);
    rep.post_dropout_rmse =
        detail::rmse_between(rep.ranges_on, d.end + rep.settle_s, d.end + rep.settle_s + rep.window_s);
    rep.terminal_error_on = detail::error_at_or_before(rep.ranges_on, d.end);
    rep.terminal_error_off = detail::error_at_or_before(rep.ranges_off, d.end);
  }
  else
  {
    rep.terminal_error_on = rep.ranges_on.error.empty() ? 0.0 : rep.ranges_on.error.back();
    rep.terminal_error_off = rep.ranges_off.error.empty() ? 0.0 : rep.ranges_off.error.back();
  }
  return rep;
}

}  // namespace anchormap::sim

#endif  // ANCHORMAP_SIM_FUSION_DEMO_HPP_
