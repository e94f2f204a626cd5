#ifndef ANCHORMAP_WAYPOINT_MIN_SNAP_HPP_
#define ANCHORMAP_WAYPOINT_MIN_SNAP_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <span>
#include <vector>

#include "anchormap/types.hpp"

namespace anchormap
{
/// Largest accepted ratio between the longest and the shortest segment time.
inline constexpr double kMaxSegmentTimeRatio = 1e4;

struct TrajectorySample
{
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
};

///
/// \brief Piecewise 7th-order polynomial in 3D. Segment i is stored in normalized time
/// tau = (t - t_i) / T_i with coefficients coeffs[i].col(axis)(n) of tau^n.
///
class PolyTrajectory
{
public:
  using Coeffs = Eigen::Matrix<double, 8, 3>;

  PolyTrajectory(std::vector<double> durations, std::vector<Coeffs> coeffs)
    : durations_(std::move(durations)), coeffs_(std::move(coeffs))
  {
    knots_.assign(1, 0.0);
    for (double T : durations_)
      knots_.push_back(knots_.back() + T);
  }

  double duration() const { return knots_.back(); }
  const std::vector<double>& knot_times() const { return knots_; }
  std::size_t segment_count() const { return durations_.size(); }

  /// k-th time derivative at t, clamped to [0, duration].
  Vec3 evaluate(double t, int k = 0) const
  {
    t = std::clamp(t, 0.0, duration());
    std::size_t i = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), t) - knots_.begin());
    i = std::clamp<std::size_t>(i, 1, durations_.size()) - 1;
    return evaluate_segment(i, (t - knots_[i]) / durations_[i], k);
  }

  /// k-th time derivative of segment i at normalized time tau.
  Vec3 evaluate_segment(std::size_t i, double tau, int k) const
  {
    Eigen::Matrix<double, 8, 1> basis = Eigen::Matrix<double, 8, 1>::Zero();
    for (int n = k; n < 8; ++n)
      basis(n) = falling(n, k) * std::pow(tau, n - k);
    return (coeffs_[i].transpose() * basis) / std::pow(durations_[i], k);
  }

  std::vector<TrajectorySample> sample(double rate_hz) const
  {
    if (!(rate_hz > 0.0))
      throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
    std::vector<TrajectorySample> out;
    const double dt = 1.0 / rate_hz;
    const auto n = static_cast<std::size_t>(std::floor(duration() / dt + 1e-9));
    for (std::size_t s = 0; s <= n; ++s)
    {
      const double t = static_cast<double>(s) * dt;
      out.push_back({t, evaluate(t, 0), evaluate(t, 1)});
    }
    if (duration() - out.back().t > 1e-9)
      out.push_back({duration(), evaluate(duration(), 0), evaluate(duration(), 1)});
    return out;
  }

  static double falling(int n, int k)
  {
    double f = 1.0;
    for (int m = 0; m < k; ++m)
      f *= static_cast<double>(n - m);
    return f;
  }

private:
  std::vector<double> durations_;
  std::vector<Coeffs> coeffs_;
  std::vector<double> knots_;
};

/// Segment times proportional to the distance between consecutive points at avg_speed.
inline std::vector<double> segment_times_by_distance(std::span<const Vec3> points, double avg_speed = 1.0)
{
  if (!(avg_speed > 0.0))
    throw Error(ErrorCode::InvalidArgument, "average speed must be positive");
  std::vector<double> times;
  for (std::size_t i = 1; i < points.size(); ++i)
    times.push_back((points[i] - points[i - 1]).norm() / avg_speed);
  const double longest = times.empty() ? 0.0 : *std::max_element(times.begin(), times.end());
  // repeated points still get a short segment
  const double floor = std::max(longest * 1e-3, 1e-3);
  for (double& T : times)
    T = std::max(T, floor);
  return times;
}

///
/// \brief Minimum-snap trajectory from `start` through `waypoints`, one segment per gap.
///
/// Each axis solves min sum_i int ||x_i''''||^2 dt subject to passing through every point,
/// continuity of velocity, acceleration and jerk at interior knots and zero velocity at
/// both ends, through the KKT system of the equality-constrained quadratic program.
/// Higher-order smoothness at the knots is a property of the optimum, not a constraint.
///
inline PolyTrajectory min_snap_trajectory(std::span<const Vec3> waypoints, const Vec3& start,
                                          std::span<const double> segment_times)
{
  std::vector<Vec3> pts;
  pts.push_back(start);
  pts.insert(pts.end(), waypoints.begin(), waypoints.end());
  if (pts.size() < 2)
    throw Error(ErrorCode::InvalidArgument, "min-snap needs at least two points");
  const std::size_t N = pts.size() - 1;
  if (segment_times.size() != N)
    throw Error(ErrorCode::InvalidArgument, "segment time count must equal the number of segments");
  for (double T : segment_times)
    if (!(T > 0.0) || !std::isfinite(T))
      throw Error(ErrorCode::InvalidArgument, "segment times must be positive");
  const auto [tmin, tmax] = std::minmax_element(segment_times.begin(), segment_times.end());
  if (*tmax / *tmin > kMaxSegmentTimeRatio)
    throw Error(ErrorCode::IllConditionedSpline, "segment time ratio exceeds 1e4");

  const Eigen::Index n_var = static_cast<Eigen::Index>(8 * N);
  const Eigen::Index n_con = static_cast<Eigen::Index>(2 * N + 3 * (N - 1) + 2);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n_var + n_con, n_var + n_con);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n_var + n_con, 3);

  // cost: T^-7 int_0^1 (d^4x/dtau^4)^2 dtau
  for (std::size_t i = 0; i < N; ++i)
  {
    const double scale = std::pow(segment_times[i], -7);
    const Eigen::Index o = static_cast<Eigen::Index>(8 * i);
    for (int n = 4; n < 8; ++n)
      for (int m = 4; m < 8; ++m)
        K(o + n, o + m) = 2.0 * scale * PolyTrajectory::falling(n, 4) * PolyTrajectory::falling(m, 4) / (n + m - 7);
  }

  // row of d^k/dt^k at tau in {0, 1} for segment i
  auto deriv_row = [&](std::size_t i, double tau, int k) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n_var);
    for (int n = k; n < 8; ++n)
      row(static_cast<Eigen::Index>(8 * i) + n) =
          PolyTrajectory::falling(n, k) * std::pow(tau, n - k) / std::pow(segment_times[i], k);
    return row;
  };

  Eigen::Index c = n_var;
  auto add = [&](const Eigen::RowVectorXd& row, const Eigen::RowVector3d& b) {
    K.block(c, 0, 1, n_var) = row;
    K.block(0, c, n_var, 1) = row.transpose();
    rhs.row(c) = b;
    ++c;
  };
  for (std::size_t i = 0; i < N; ++i)
  {
    add(deriv_row(i, 0.0, 0), pts[i].transpose());
    add(deriv_row(i, 1.0, 0), pts[i + 1].transpose());
  }
  for (std::size_t i = 0; i + 1 < N; ++i)
    for (int k = 1; k <= 3; ++k)
      add(deriv_row(i, 1.0, k) - deriv_row(i + 1, 0.0, k), Eigen::RowVector3d::Zero());
  add(deriv_row(0, 0.0, 1), Eigen::RowVector3d::Zero());
  add(deriv_row(N - 1, 1.0, 1), Eigen::RowVector3d::Zero());

  // Symmetric equilibration D K D: segment i's coefficients scaled by T_i^3.5 so its cost
  // block is O(1), then each constraint row normalized by its largest entry.
  Eigen::VectorXd d = Eigen::VectorXd::Ones(n_var + n_con);
  for (std::size_t i = 0; i < N; ++i)
    d.segment<8>(static_cast<Eigen::Index>(8 * i)).setConstant(std::pow(segment_times[i], 3.5));
  for (Eigen::Index r = n_var; r < n_var + n_con; ++r)
    d(r) = 1.0 / (K.block(r, 0, 1, n_var).cwiseProduct(d.head(n_var).transpose())).cwiseAbs().maxCoeff();
  const Eigen::MatrixXd Ks = d.asDiagonal() * K * d.asDiagonal();

  Eigen::FullPivLU<Eigen::MatrixXd> lu(Ks);
  if (!lu.isInvertible())
    throw Error(ErrorCode::IllConditionedSpline, "singular KKT system");
  const Eigen::MatrixXd sol = d.asDiagonal() * lu.solve(d.asDiagonal() * rhs);

  std::vector<PolyTrajectory::Coeffs> coeffs(N);
  for (std::size_t i = 0; i < N; ++i)
    coeffs[i] = sol.block(static_cast<Eigen::Index>(8 * i), 0, 8, 3);
  return PolyTrajectory(std::vector<double>(segment_times.begin(), segment_times.end()), std::move(coeffs));
}

}  // namespace anchormap

#endif  // ANCHORMAP_WAYPOINT_MIN_SNAP_HPP_
