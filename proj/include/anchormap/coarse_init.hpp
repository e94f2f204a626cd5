#ifndef ANCHORMAP_COARSE_INIT_HPP_
#define ANCHORMAP_COARSE_INIT_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "anchormap/types.hpp"

namespace anchormap
{
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

/// Floor applied to every row variance so that noiseless data takes the weighted path.
inline constexpr double kRowVarianceFloor = 1e-12;
/// Largest accepted condition number of the 4x4 normal matrix.
inline constexpr double kCoarseMaxCondition = 1e8;

struct DoubleMethodRow
{
  /// [-(p_i - p_pivot)^T, z_i - z_pivot]
  Vec4 A;
  double b = 0.0;
  double sigma_eta_sq = kRowVarianceFloor;
};

///
/// \brief Linear system obtained by differencing squared ranges against one pivot sample.
/// Unknowns are x = [p_A, gamma] with beta fixed to 1.
///
struct DoubleMethodSystem
{
  std::vector<DoubleMethodRow> rows;
  std::size_t pivot_index = 0;
};

struct CoarseSolution
{
  Vec3 anchor_position = Vec3::Zero();
  double gamma = 0.0;
  double condition_number = 1.0;
  /// trace of A^T W A
  double information_trace = 0.0;
  std::size_t pivot_index = 0;
};

///
/// \brief One row of the double method for a sample paired with the pivot.
///
/// Squaring z - gamma = |p_U - p_A| and subtracting the pivot equation gives
/// -(p_i - p_p)^T p_A + (z_i - z_p) gamma = ((z_i^2 - z_p^2) - (|p_i|^2 - |p_p|^2)) / 2.
///
inline DoubleMethodRow build_row(const RangeMeasurement& sample, const RangeMeasurement& pivot)
{
  if (sample.anchor_id != pivot.anchor_id)
    throw Error(ErrorCode::MismatchedAnchor, "sample anchor " + std::to_string(sample.anchor_id) +
                                                 " paired with pivot anchor " + std::to_string(pivot.anchor_id));
  const Vec3& pi = sample.tag_position;
  const Vec3& pp = pivot.tag_position;
  DoubleMethodRow row;
  row.A.head<3>() = -(pi - pp);
  row.A(3) = sample.range - pivot.range;
  row.b = 0.5 * ((sample.range * sample.range - pivot.range * pivot.range) - (pi.squaredNorm() - pp.squaredNorm()));
  return row;
}

/// Variance of b_k, with isotropic tag-position covariance sigma_p^2 I. Not floored.
inline double pivot_variance(const RangeMeasurement& sample, const RangeMeasurement& pivot, const NoiseSpec& noise)
{
  const double sn2 = noise.sigma_range * noise.sigma_range;
  const double sp2 = noise.sigma_position * noise.sigma_position;
  return (sample.range * sample.range + pivot.range * pivot.range) * sn2 +
         sp2 * sample.tag_position.squaredNorm() + sp2 * pivot.tag_position.squaredNorm();
}

namespace detail
{
inline double floored_variance(const RangeMeasurement& s, const RangeMeasurement& p, const NoiseSpec& noise)
{
  return std::max(pivot_variance(s, p, noise), kRowVarianceFloor);
}

inline void require_samples(std::span<const RangeMeasurement> samples)
{
  if (samples.size() < 5)
    throw Error(ErrorCode::InsufficientSamples,
                "double method needs at least 5 samples, got " + std::to_string(samples.size()));
  for (const auto& s : samples)
    if (s.anchor_id != samples.front().anchor_id)
      throw Error(ErrorCode::MismatchedAnchor, "samples from more than one anchor");
}
}  // namespace detail

/// trace(I_x) for one candidate pivot: sum_k (|p_k - p_p|^2 + (z_k - z_p)^2) / sigma_eta_k^2.
inline double pivot_information_trace(std::span<const RangeMeasurement> samples, std::size_t pivot,
                                      const NoiseSpec& noise)
{
  const auto& p = samples[pivot];
  double trace = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k)
  {
    if (k == pivot)
      continue;
    const double dz = samples[k].range - p.range;
    const double spread = (samples[k].tag_position - p.tag_position).squaredNorm() + dz * dz;
    trace += spread / detail::floored_variance(samples[k], p, noise);
  }
  return trace;
}

/// A-optimal pivot: maximizes trace of the information matrix. Ties go to the lowest index.
inline std::size_t select_pivot(std::span<const RangeMeasurement> samples, const NoiseSpec& noise)
{
  detail::require_samples(samples);
  std::size_t best = 0;
  double best_trace = -1.0;
  for (std::size_t p = 0; p < samples.size(); ++p)
  {
    const double t = pivot_information_trace(samples, p, noise);
    if (t > best_trace)
    {
      best_trace = t;
      best = p;
    }
  }
  return best;
}

inline DoubleMethodSystem build_system(std::span<const RangeMeasurement> samples, std::size_t pivot,
                                       const NoiseSpec& noise)
{
  DoubleMethodSystem sys;
  sys.pivot_index = pivot;
  sys.rows.reserve(samples.size() - 1);
  for (std::size_t k = 0; k < samples.size(); ++k)
  {
    if (k == pivot)
      continue;
    DoubleMethodRow row = build_row(samples[k], samples[pivot]);
    row.sigma_eta_sq = detail::floored_variance(samples[k], samples[pivot], noise);
    sys.rows.push_back(row);
  }
  return sys;
}

///
/// \brief Optimal double method: weighted LS x = (A^T W A)^-1 A^T W b with W = Sigma_eta^-1
/// over the A-optimal pivot. Throws RankDeficient when cond(A^T W A) > 1e8.
///
inline CoarseSolution solve_coarse(std::span<const RangeMeasurement> samples, const NoiseSpec& noise)
{
  if (!noise.valid())
    throw Error(ErrorCode::InvalidArgument, "negative noise std");
  const std::size_t pivot = select_pivot(samples, noise);
  const DoubleMethodSystem sys = build_system(samples, pivot, noise);

  Mat4 N = Mat4::Zero();
  Vec4 rhs = Vec4::Zero();
  for (const auto& row : sys.rows)
  {
    const double w = 1.0 / row.sigma_eta_sq;
    N.noalias() += w * row.A * row.A.transpose();
    rhs += w * row.b * row.A;
  }

  Eigen::SelfAdjointEigenSolver<Mat4> eig(N, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  const double cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(cond <= kCoarseMaxCondition))
    throw Error(ErrorCode::RankDeficient,
                "normal matrix condition number " + std::to_string(cond) + " exceeds 1e8 (planar or collinear tags?)");

  const Vec4 x = N.ldlt().solve(rhs);
  CoarseSolution sol;
  sol.anchor_position = x.head<3>();
  sol.gamma = x(3);
  sol.condition_number = std::max(cond, 1.0);
  sol.information_trace = N.trace();
  sol.pivot_index = pivot;
  return sol;
}

}  // namespace anchormap

#endif  // ANCHORMAP_COARSE_INIT_HPP_
