#ifndef ANCHORMAP_RANGE_MODEL_HPP_
#define ANCHORMAP_RANGE_MODEL_HPP_

#include <Eigen/Dense>

#include "anchormap/types.hpp"

namespace anchormap
{
///
/// \brief Partial derivatives of the biased range h = beta * |p_I + R^T p_U - p_A| + gamma.
///
/// Every vector block is a row stored as a column vector. The rotation block is taken
/// w.r.t. a left perturbation R = Exp(dtheta) * R_hat of the global-to-IMU rotation, which
/// gives d h / d dtheta = Gamma * R_hat^T * skew(p_U).
///
struct RangeJacobian
{
  Vec3 d_rotation;
  Vec3 d_vehicle_position;
  Vec3 d_tag_offset;
  Vec3 d_anchor_position;
  double d_beta = 0.0;
  double d_gamma = 0.0;
};

/// Tag position in the global frame.
inline Vec3 tag_position(const Vec3& vehicle_pos, const Rotation& rot_IG, const Vec3& tag_offset)
{
  return vehicle_pos + rot_IG.matrix().transpose() * tag_offset;
}

namespace detail
{
inline Vec3 checked_difference(const Vec3& tag, const Vec3& anchor_pos)
{
  Vec3 diff = tag - anchor_pos;
  if (!diff.allFinite() || diff.norm() <= kDegenerateDistance)
    throw Error(ErrorCode::DegenerateGeometry, "tag and anchor positions coincide");
  return diff;
}
}  // namespace detail

/// Range predicted from a global tag position.
inline double predict_range(const Vec3& tag_pos, const Anchor& anchor)
{
  return anchor.beta * detail::checked_difference(tag_pos, anchor.position).norm() + anchor.gamma;
}

inline double predict_range(const Vec3& vehicle_pos, const Rotation& rot_IG, const Vec3& tag_offset,
                            const Anchor& anchor)
{
  return predict_range(tag_position(vehicle_pos, rot_IG, tag_offset), anchor);
}

inline RangeJacobian range_jacobian(const Vec3& vehicle_pos, const Rotation& rot_IG, const Vec3& tag_offset,
                                    const Anchor& anchor)
{
  const Mat3 Rt = rot_IG.matrix().transpose();
  const Vec3 diff = detail::checked_difference(vehicle_pos + Rt * tag_offset, anchor.position);
  const double d = diff.norm();

  // Gamma(x) = beta * diff^T / d, the row shared by all position-like blocks
  const Vec3 gamma_row = anchor.beta * diff / d;

  RangeJacobian J;
  J.d_vehicle_position = gamma_row;
  J.d_anchor_position = -gamma_row;
  J.d_tag_offset = (gamma_row.transpose() * Rt).transpose();
  J.d_rotation = (gamma_row.transpose() * Rt * skew(tag_offset)).transpose();
  J.d_beta = d;
  J.d_gamma = 1.0;
  return J;
}

}  // namespace anchormap

#endif  // ANCHORMAP_RANGE_MODEL_HPP_
