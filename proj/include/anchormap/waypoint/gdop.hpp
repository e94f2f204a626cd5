#ifndef ANCHORMAP_WAYPOINT_GDOP_HPP_
#define ANCHORMAP_WAYPOINT_GDOP_HPP_

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anchormap/types.hpp"
#include "anchormap/waypoint/volume.hpp"

namespace anchormap
{
/// Largest accepted condition number of H^T H.
inline constexpr double kGdopMaxCondition = 1e10;
/// Objective value for infeasible or singular waypoint sets.
inline constexpr double kInfeasibleCost = 1e12;

struct DirectionAngles
{
  double azimuth = 0.0;
  double elevation = 0.0;
};

///
/// \brief Azimuth and elevation of the anchor seen from a waypoint, i.e. of p_A - q.
///
/// Azimuth is in (-pi, pi], elevation in [-pi/2, pi/2]. When the waypoint is directly
/// below or above the anchor the azimuth is 0 by convention.
///
inline DirectionAngles direction_angles(const Vec3& anchor_pos, const Vec3& waypoint)
{
  const Vec3 d = anchor_pos - waypoint;
  if (!d.allFinite() || d.norm() <= kDegenerateDistance)
    throw Error(ErrorCode::DegenerateGeometry, "waypoint coincides with anchor");
  const double horiz = std::hypot(d.x(), d.y());
  if (horiz <= kDegenerateDistance)
    return {0.0, d.z() > 0.0 ? std::numbers::pi / 2 : -std::numbers::pi / 2};
  double az = std::atan2(d.y(), d.x());
  if (az <= -std::numbers::pi)
    az = std::numbers::pi;
  return {az, std::atan(d.z() / horiz)};
}

/// Direction-cosine row [cos(el)cos(az), cos(el)sin(az), sin(el), 1].
inline Eigen::RowVector4d direction_row(const DirectionAngles& a)
{
  const double ce = std::cos(a.elevation);
  return {ce * std::cos(a.azimuth), ce * std::sin(a.azimuth), std::sin(a.elevation), 1.0};
}

inline Eigen::Matrix<double, Eigen::Dynamic, 4> build_H(const Vec3& anchor_pos, std::span<const Vec3> waypoints)
{
  if (waypoints.size() < 4)
    throw Error(ErrorCode::InsufficientSamples, "GDOP needs at least 4 waypoints");
  Eigen::Matrix<double, Eigen::Dynamic, 4> H(static_cast<Eigen::Index>(waypoints.size()), 4);
  for (std::size_t i = 0; i < waypoints.size(); ++i)
    H.row(static_cast<Eigen::Index>(i)) = direction_row(direction_angles(anchor_pos, waypoints[i]));
  return H;
}

namespace detail
{
/// sqrt(trace((H^T H)^-1)) or nothing when cond(H^T H) >= 1e10; cond is always written.
inline std::optional<double> gdop_of_normal(const Eigen::Matrix4d& HtH, double& cond)
{
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(HtH, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues()(0);
  const double lmax = eig.eigenvalues()(3);
  cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(cond < kGdopMaxCondition))
    return std::nullopt;
  return std::sqrt(eig.eigenvalues().cwiseInverse().sum());
}

inline Eigen::Matrix4d normal_from_directions(const Vec3& anchor_pos, std::span<const Vec3> waypoints)
{
  Eigen::Matrix4d HtH = Eigen::Matrix4d::Zero();
  for (const auto& q : waypoints)
  {
    const Eigen::Vector4d row = direction_row(direction_angles(anchor_pos, q)).transpose();
    HtH.noalias() += row * row.transpose();
  }
  return HtH;
}
}  // namespace detail

/// sqrt(trace((H^T H)^-1)); throws SingularGeometry when cond(H^T H) >= 1e10.
inline double gdop(const Vec3& anchor_pos, std::span<const Vec3> waypoints)
{
  if (waypoints.size() < 4)
    throw Error(ErrorCode::InsufficientSamples, "GDOP needs at least 4 waypoints");
  double cond = 0.0;
  const auto g = detail::gdop_of_normal(detail::normal_from_directions(anchor_pos, waypoints), cond);
  if (!g)
    throw Error(ErrorCode::SingularGeometry, "H^T H condition number " + std::to_string(cond));
  return *g;
}

struct DeterminantCheck
{
  double closed_form = 0.0;
  double numeric = 0.0;
};

///
/// \brief det(H^T H) for exactly four waypoints, both as (h1 - h2 + h3 - h4)^2 and numerically.
///
/// With H square, det(H^T H) = det(H)^2. Expanding det(H) along the first column, the
/// term of row t uses the remaining rows i < j < k:
///   h_t = -Cg_t Cp_t (Cp_k Sg_k ds_ji + Cp_j Sg_j ds_ik + Cp_i Sg_i ds_kj),
///   ds_ab = Sp_a - Sp_b.
///
inline DeterminantCheck det_identity_check(const Vec3& anchor_pos, std::span<const Vec3> waypoints)
{
  if (waypoints.size() != 4)
    throw Error(ErrorCode::InvalidArgument, "determinant identity needs exactly 4 waypoints");
  std::array<double, 4> cg{}, sg{}, cp{}, sp{};
  for (int t = 0; t < 4; ++t)
  {
    const auto a = direction_angles(anchor_pos, waypoints[static_cast<std::size_t>(t)]);
    cg[t] = std::cos(a.azimuth);
    sg[t] = std::sin(a.azimuth);
    cp[t] = std::cos(a.elevation);
    sp[t] = std::sin(a.elevation);
  }
  auto ds = [&](int a, int b) { return sp[a] - sp[b]; };

  std::array<double, 4> h{};
  for (int t = 0; t < 4; ++t)
  {
    std::array<int, 3> rest{};
    for (int r = 0, n = 0; r < 4; ++r)
      if (r != t)
        rest[n++] = r;
    const int i = rest[0], j = rest[1], k = rest[2];
    h[t] = -cg[t] * cp[t] * (cp[k] * sg[k] * ds(j, i) + cp[j] * sg[j] * ds(i, k) + cp[i] * sg[i] * ds(k, j));
  }
  const double det_h = h[0] - h[1] + h[2] - h[3];

  // H^T H squares the conditioning of H; extended precision keeps near-singular sets accurate
  const Eigen::Matrix<long double, 4, 4> H = build_H(anchor_pos, waypoints).cast<long double>();
  const Eigen::Matrix<long double, 4, 4> HtH = H.transpose() * H;
  return {det_h * det_h, static_cast<double>(HtH.partialPivLu().determinant())};
}

///
/// \brief Mean GDOP over anchors; kInfeasibleCost when any waypoint leaves the volume or
/// any per-anchor geometry is singular.
///
inline double objective(std::span<const Vec3> waypoints, std::span<const Vec3> anchors, const FlightVolume& volume)
{
  if (anchors.empty() || waypoints.size() < 4)
    return kInfeasibleCost;
  for (const auto& q : waypoints)
    if (!volume.contains(q))
      return kInfeasibleCost;
  double sum = 0.0;
  for (const auto& a : anchors)
  {
    double cond = 0.0;
    std::optional<double> g;
    try
    {
      g = detail::gdop_of_normal(detail::normal_from_directions(a, waypoints), cond);
    }
    catch (const Error&)
    {
      return kInfeasibleCost;
    }
    if (!g)
      return kInfeasibleCost;
    sum += *g;
  }
  return sum / static_cast<double>(anchors.size());
}

}  // namespace anchormap

#endif  // ANCHORMAP_WAYPOINT_GDOP_HPP_
