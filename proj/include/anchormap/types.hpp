#ifndef ANCHORMAP_TYPES_HPP_
#define ANCHORMAP_TYPES_HPP_

#include <Eigen/Dense>
#include <cmath>

#include "anchormap/error.hpp"

namespace anchormap
{
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Distance below which tag and anchor are considered coincident [m].
inline constexpr double kDegenerateDistance = 1e-9;

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

inline Mat3 skew(const Vec3& v)
{
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

///
/// \brief Rotation from the global frame G to the IMU frame I, stored as a 3x3 matrix.
///
/// matrix() maps global-frame coordinates into the IMU frame (x_I = R x_G); the
/// transpose maps IMU-frame vectors (e.g. the tag lever arm) into the global frame.
///
class Rotation
{
public:
  Rotation() : R_(Mat3::Identity()) {}

  explicit Rotation(const Mat3& R) : R_(R)
  {
    if (!R.allFinite() || ((R.transpose() * R) - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
      throw Error(ErrorCode::InvalidArgument, "rotation matrix is not orthonormal");
    if (std::abs(R.determinant() - 1.0) > 1e-9)
      throw Error(ErrorCode::InvalidArgument, "rotation matrix determinant is not +1");
  }

  static Rotation identity() { return Rotation(); }

  static Rotation from_axis_angle(const Vec3& axis, double angle)
  {
    return Rotation(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix());
  }

  /// Exp(delta) * R, the left perturbation used by the range Jacobian.
  Rotation perturbed(const Vec3& delta) const
  {
    const double n = delta.norm();
    if (n == 0.0)
      return *this;
    return Rotation(Eigen::AngleAxisd(n, delta / n).toRotationMatrix() * R_);
  }

  const Mat3& matrix() const { return R_; }

private:
  Mat3 R_;
};

struct Anchor
{
  int id = 0;
  Vec3 position = Vec3::Zero();
  /// multiplicative distance bias
  double beta = 1.0;
  /// constant bias [m]
  double gamma = 0.0;
};

struct RangeMeasurement
{
  int anchor_id = 0;
  /// biased range [m]
  double range = 0.0;
  /// [s]
  double timestamp = 0.0;
  /// tag position in the global frame when the range was collected (possibly noisy)
  Vec3 tag_position = Vec3::Zero();
};

struct NoiseSpec
{
  double sigma_range = 0.0;
  /// isotropic std of the tag position noise
  double sigma_position = 0.0;

  bool valid() const { return sigma_range >= 0.0 && sigma_position >= 0.0; }
};

}  // namespace anchormap

#endif  // ANCHORMAP_TYPES_HPP_
