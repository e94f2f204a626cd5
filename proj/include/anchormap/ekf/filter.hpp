#ifndef ANCHORMAP_EKF_FILTER_HPP_
#define ANCHORMAP_EKF_FILTER_HPP_

#include <Eigen/Dense>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anchormap/range_model.hpp"

namespace anchormap::ekf
{
enum class AnchorMode
{
  Fixed,
  OnlineRefined,
};

struct RegisteredAnchor
{
  Anchor anchor;
  AnchorMode mode = AnchorMode::Fixed;
};

///
/// \brief Anchors known to the filter. Fixed anchors pin the global frame and contribute no
/// state; online-refined anchors get a [position, beta, gamma] block in the filter state.
/// At least two anchors must be fixed as soon as one is refined online.
///
class AnchorRegistry
{
public:
  void add(const Anchor& anchor, AnchorMode mode)
  {
    if (!(anchor.beta > 0.0))
      throw Error(ErrorCode::InvalidArgument, "anchor beta must be positive");
    if (!entries_.emplace(anchor.id, RegisteredAnchor{anchor, mode}).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate anchor id " + std::to_string(anchor.id));
  }

  void validate() const
  {
    std::size_t fixed = 0, online = 0;
    for (const auto& [id, e] : entries_)
      (e.mode == AnchorMode::Fixed ? fixed : online)++;
    if (online > 0 && fixed < 2)
      throw Error(ErrorCode::InvalidArgument, "online anchor refinement needs at least two fixed anchors");
  }

  const RegisteredAnchor& at(int id) const
  {
    const auto it = entries_.find(id);
    if (it == entries_.end())
      throw Error(ErrorCode::UnknownAnchor, "anchor " + std::to_string(id) + " is not registered");
    return it->second;
  }

  bool contains(int id) const { return entries_.count(id) != 0; }

  std::vector<int> online_ids() const
  {
    std::vector<int> ids;
    for (const auto& [id, e] : entries_)
      if (e.mode == AnchorMode::OnlineRefined)
        ids.push_back(id);
    return ids;
  }

  const std::map<int, RegisteredAnchor>& entries() const { return entries_; }

private:
  std::map<int, RegisteredAnchor> entries_;
};

struct AnchorBlock
{
  int id = 0;
  Vec3 position = Vec3::Zero();
  double beta = 1.0;
  double gamma = 0.0;
};

///
/// \brief Reduced filter state: [p (3), v (3), tag offset (3), pose-source drift (3),
/// {p_A (3), beta, gamma} per online anchor]. The attitude is an input, not an estimated
/// quantity. The drift block is the random-walk offset of the pose fixes; it stays at zero
/// with zero variance when the drift PSD is zero.
///
struct FilterState
{
  static constexpr Eigen::Index kPos = 0;
  static constexpr Eigen::Index kVel = 3;
  static constexpr Eigen::Index kTag = 6;
  static constexpr Eigen::Index kDrift = 9;
  static constexpr Eigen::Index kCore = 12;
  static constexpr Eigen::Index kAnchorBlock = 5;

  double time = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 tag_offset = Vec3::Zero();
  Vec3 pose_drift = Vec3::Zero();
  Rotation rot_IG;
  std::vector<AnchorBlock> anchors;
  Eigen::MatrixXd covariance;

  Eigen::Index dim() const { return kCore + kAnchorBlock * static_cast<Eigen::Index>(anchors.size()); }

  static Eigen::Index anchor_offset(std::size_t slot) { return kCore + kAnchorBlock * static_cast<Eigen::Index>(slot); }

  std::optional<std::size_t> slot_of(int anchor_id) const
  {
    for (std::size_t i = 0; i < anchors.size(); ++i)
      if (anchors[i].id == anchor_id)
        return i;
    return std::nullopt;
  }

  Eigen::VectorXd mean() const
  {
    Eigen::VectorXd x(dim());
    x.segment<3>(kPos) = position;
    x.segment<3>(kVel) = velocity;
    x.segment<3>(kTag) = tag_offset;
    x.segment<3>(kDrift) = pose_drift;
    for (std::size_t i = 0; i < anchors.size(); ++i)
    {
      const Eigen::Index o = anchor_offset(i);
      x.segment<3>(o) = anchors[i].position;
      x(o + 3) = anchors[i].beta;
      x(o + 4) = anchors[i].gamma;
    }
    return x;
  }

  void set_mean(const Eigen::VectorXd& x)
  {
    position = x.segment<3>(kPos);
    velocity = x.segment<3>(kVel);
    tag_offset = x.segment<3>(kTag);
    pose_drift = x.segment<3>(kDrift);
    for (std::size_t i = 0; i < anchors.size(); ++i)
    {
      const Eigen::Index o = anchor_offset(i);
      anchors[i].position = x.segment<3>(o);
      anchors[i].beta = x(o + 3);
      anchors[i].gamma = x(o + 4);
    }
  }

  /// Symmetric within tol and smallest eigenvalue >= -tol.
  bool covariance_valid(double tol = 1e-9) const
  {
    if (covariance.rows() != dim() || covariance.cols() != dim() || !covariance.allFinite())
      return false;
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > tol)
      return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff() >= -tol;
  }
};

struct InitialUncertainty
{
  double sigma_position = 0.1;
  double sigma_velocity = 0.1;
  double sigma_tag_offset = 0.01;
  double sigma_pose_drift = 0.0;
  double sigma_anchor_position = 0.1;
  double sigma_beta = 0.01;
  double sigma_gamma = 0.05;
};

/// Builds a state with one block per online anchor of the registry, seeded from it.
inline FilterState make_state(double time, const Vec3& position, const Vec3& velocity, const Vec3& tag_offset,
                              const AnchorRegistry& registry, const InitialUncertainty& sig = {})
{
  registry.validate();
  FilterState s;
  s.time = time;
  s.position = position;
  s.velocity = velocity;
  s.tag_offset = tag_offset;
  for (int id : registry.online_ids())
  {
    const Anchor& a = registry.at(id).anchor;
    s.anchors.push_back({id, a.position, a.beta, a.gamma});
  }
  Eigen::VectorXd var(s.dim());
  var.segment<3>(FilterState::kPos).setConstant(sig.sigma_position * sig.sigma_position);
  var.segment<3>(FilterState::kVel).setConstant(sig.sigma_velocity * sig.sigma_velocity);
  var.segment<3>(FilterState::kTag).setConstant(sig.sigma_tag_offset * sig.sigma_tag_offset);
  var.segment<3>(FilterState::kDrift).setConstant(sig.sigma_pose_drift * sig.sigma_pose_drift);
  for (std::size_t i = 0; i < s.anchors.size(); ++i)
  {
    const Eigen::Index o = FilterState::anchor_offset(i);
    var.segment<3>(o).setConstant(sig.sigma_anchor_position * sig.sigma_anchor_position);
    var(o + 3) = sig.sigma_beta * sig.sigma_beta;
    var(o + 4) = sig.sigma_gamma * sig.sigma_gamma;
  }
  s.covariance = var.asDiagonal();
  return s;
}

///
/// \brief Constant-velocity propagation with white-acceleration noise of PSD accel_psd
/// [m^2/s^3] on each axis. The pose drift is a random walk of PSD drift_psd [m^2/s]; tag
/// offset and anchor blocks are static.
///
inline FilterState propagate(FilterState state, double dt, double accel_psd, double drift_psd = 0.0)
{
  if (dt < 0.0)
    throw Error(ErrorCode::InvalidArgument, "negative propagation interval");
  if (dt == 0.0)
    return state;
  const Eigen::Index n = state.dim();
  Eigen::MatrixXd F = Eigen::MatrixXd::Identity(n, n);
  F.block<3, 3>(FilterState::kPos, FilterState::kVel) = dt * Mat3::Identity();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  const Mat3 I = Mat3::Identity();
  Q.block<3, 3>(FilterState::kPos, FilterState::kPos) = accel_psd * dt * dt * dt / 3.0 * I;
  Q.block<3, 3>(FilterState::kPos, FilterState::kVel) = accel_psd * dt * dt / 2.0 * I;
  Q.block<3, 3>(FilterState::kVel, FilterState::kPos) = accel_psd * dt * dt / 2.0 * I;
  Q.block<3, 3>(FilterState::kVel, FilterState::kVel) = accel_psd * dt * I;
  Q.block<3, 3>(FilterState::kDrift, FilterState::kDrift) = drift_psd * dt * I;

  state.position += dt * state.velocity;
  Eigen::MatrixXd P = F * state.covariance * F.transpose() + Q;
  state.covariance = 0.5 * (P + P.transpose());
  state.time += dt;
  return state;
}

struct UpdateOptions
{
  /// chi-square gate on the normalized innovation; off by default
  bool gating = false;
  /// 99.7% quantile of chi-square with one degree of freedom
  double gate_threshold = 8.807;
  /// linearize the measurement here instead of at the current mean
  std::optional<Eigen::VectorXd> linearize_at;
};

namespace detail
{
struct RangeLinearization
{
  double predicted = 0.0;
  Eigen::RowVectorXd H;
};

inline RangeLinearization linearize_range(const FilterState& s, const AnchorRegistry& registry, int anchor_id)
{
  const RegisteredAnchor& reg = registry.at(anchor_id);
  Anchor anchor = reg.anchor;
  std::optional<std::size_t> slot;
  if (reg.mode == AnchorMode::OnlineRefined)
  {
    slot = s.slot_of(anchor_id);
    if (!slot)
      throw Error(ErrorCode::UnknownAnchor, "online anchor " + std::to_string(anchor_id) + " has no state block");
    const AnchorBlock& b = s.anchors[*slot];
    anchor.position = b.position;
    anchor.beta = b.beta;
    anchor.gamma = b.gamma;
  }
  const RangeJacobian J = range_jacobian(s.position, s.rot_IG, s.tag_offset, anchor);
  RangeLinearization lin;
  lin.predicted = predict_range(s.position, s.rot_IG, s.tag_offset, anchor);
  lin.H = Eigen::RowVectorXd::Zero(s.dim());
  lin.H.segment<3>(FilterState::kPos) = J.d_vehicle_position.transpose();
  lin.H.segment<3>(FilterState::kTag) = J.d_tag_offset.transpose();
  if (slot)
  {
    const Eigen::Index o = FilterState::anchor_offset(*slot);
    lin.H.segment<3>(o) = J.d_anchor_position.transpose();
    lin.H(o + 3) = J.d_beta;
    lin.H(o + 4) = J.d_gamma;
  }
  return lin;
}

/// Joseph-form update with stacked innovation y, Jacobian H and noise R.
inline void joseph_update(FilterState& s, const Eigen::VectorXd& y, const Eigen::MatrixXd& H, const Eigen::MatrixXd& R)
{
  const Eigen::MatrixXd& P = s.covariance;
  const Eigen::MatrixXd S = H * P * H.transpose() + R;
  const Eigen::MatrixXd K = P * H.transpose() * S.ldlt().solve(Eigen::MatrixXd::Identity(S.rows(), S.cols()));
  const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(s.dim(), s.dim()) - K * H;
  Eigen::MatrixXd Pn = IKH * P * IKH.transpose() + K * R * K.transpose();
  s.covariance = 0.5 * (Pn + Pn.transpose());
  s.set_mean(s.mean() + K * y);
}
}  // namespace detail

///
/// \brief EKF range update. Fixed anchors contribute no state columns; online anchors update
/// their position and bias blocks. Orientation is not part of the state, so the rotation
/// block of the range Jacobian is not used here.
///
inline FilterState range_update(FilterState state, const AnchorRegistry& registry, const RangeMeasurement& z,
                                double sigma_range, const UpdateOptions& opts = {})
{
  detail::RangeLinearization lin;
  double innovation = 0.0;
  if (opts.linearize_at)
  {
    FilterState at = state;
    at.set_mean(*opts.linearize_at);
    lin = detail::linearize_range(at, registry, z.anchor_id);
    innovation = z.range - (lin.predicted + lin.H.dot(state.mean() - *opts.linearize_at));
  }
  else
  {
    lin = detail::linearize_range(state, registry, z.anchor_id);
    innovation = z.range - lin.predicted;
  }
  const double R = sigma_range * sigma_range;
  if (opts.gating)
  {
    const double S = lin.H.dot(state.covariance * lin.H.transpose()) + R;
    if (innovation * innovation / S > opts.gate_threshold)
      return state;
  }
  detail::joseph_update(state, Eigen::VectorXd::Constant(1, innovation), lin.H, Eigen::MatrixXd::Constant(1, 1, R));
  return state;
}

/// All ranges stacked into one update, linearized at the current mean.
inline FilterState range_update_batch(FilterState state, const AnchorRegistry& registry,
                                      std::span<const RangeMeasurement> zs, double sigma_range)
{
  if (zs.empty())
    return state;
  const auto m = static_cast<Eigen::Index>(zs.size());
  Eigen::MatrixXd H(m, state.dim());
  Eigen::VectorXd y(m);
  for (Eigen::Index k = 0; k < m; ++k)
  {
    const auto lin = detail::linearize_range(state, registry, zs[static_cast<std::size_t>(k)].anchor_id);
    H.row(k) = lin.H;
    y(k) = zs[static_cast<std::size_t>(k)].range - lin.predicted;
  }
  const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(m, m) * sigma_range * sigma_range;
  detail::joseph_update(state, y, H, R);
  return state;
}

/// Position fix standing in for a camera/VIO update, measuring position + drift.
inline FilterState pose_update(FilterState state, const Vec3& measured_position, double sigma)
{
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3, state.dim());
  H.block<3, 3>(0, FilterState::kPos) = Mat3::Identity();
  H.block<3, 3>(0, FilterState::kDrift) = Mat3::Identity();
  const Eigen::VectorXd y = measured_position - state.position - state.pose_drift;
  detail::joseph_update(state, y, H, Eigen::MatrixXd::Identity(3, 3) * sigma * sigma);
  return state;
}

///
/// \brief Ranges collected since the last update, waiting for the next camera time.
/// Timestamps must be strictly increasing and later than the last update.
///
class MeasurementBuffer
{
public:
  explicit MeasurementBuffer(double last_update_time = -std::numeric_limits<double>::infinity())
    : last_update_(last_update_time)
  {
  }

  void push(const RangeMeasurement& z)
  {
    const double prev = items_.empty() ? last_update_ : items_.back().timestamp;
    if (!(z.timestamp > prev))
      throw Error(ErrorCode::OutOfOrderBuffer, "range timestamp " + std::to_string(z.timestamp) +
                                                   " does not follow " + std::to_string(prev));
    items_.push_back(z);
  }

  /// Empties the buffer; the next range must follow `update_time`.
  void clear(double update_time)
  {
    items_.clear();
    last_update_ = update_time;
  }

  const std::vector<RangeMeasurement>& items() const { return items_; }
  bool empty() const { return items_.empty(); }
  double last_update_time() const { return last_update_; }

private:
  double last_update_;
  std::vector<RangeMeasurement> items_;
};

struct FlushEvent
{
  enum class Kind
  {
    Propagate,
    RangeUpdate,
    PoseUpdate,
  };
  Kind kind;
  double t_from = 0.0;
  double t_to = 0.0;
  int anchor_id = -1;

  bool operator==(const FlushEvent&) const = default;
};

struct PoseMeasurement
{
  Vec3 position = Vec3::Zero();
  double sigma = 0.1;
};

struct FusionConfig
{
  /// white-acceleration PSD [m^2/s^3]
  double accel_psd = 0.5;
  /// random-walk PSD of the pose drift [m^2/s]
  double drift_psd = 0.0;
  double sigma_range = 0.1;
  UpdateOptions update;
};

///
/// \brief Delayed update: walk the buffered ranges in time order with a propagate/update
/// pair each, then propagate to the camera time and apply the pose update (skipped when
/// pose is empty, e.g. during a camera dropout). Ranges are never interpolated. The buffer
/// is cleared on return.
///
inline FilterState delayed_flush(FilterState state, const AnchorRegistry& registry, MeasurementBuffer& buffer,
                                 double camera_time, const std::optional<PoseMeasurement>& pose,
                                 const FusionConfig& config, std::vector<FlushEvent>* trace = nullptr)
{
  double prev = state.time;
  for (const auto& z : buffer.items())
  {
    if (z.timestamp < prev || z.timestamp > camera_time)
      throw Error(ErrorCode::OutOfOrderBuffer, "buffered range at " + std::to_string(z.timestamp) +
                                                   " outside (" + std::to_string(state.time) + ", " +
                                                   std::to_string(camera_time) + "]");
    prev = z.timestamp;
  }
  if (camera_time < state.time)
    throw Error(ErrorCode::OutOfOrderBuffer, "camera time precedes filter time");

  for (const auto& z : buffer.items())
  {
    if (trace)
      trace->push_back({FlushEvent::Kind::Propagate, state.time, z.timestamp});
    state = propagate(std::move(state), z.timestamp - state.time, config.accel_psd, config.drift_psd);
    if (trace)
      trace->push_back({FlushEvent::Kind::RangeUpdate, z.timestamp, z.timestamp, z.anchor_id});
    state = range_update(std::move(state), registry, z, config.sigma_range, config.update);
  }
  if (trace)
    trace->push_back({FlushEvent::Kind::Propagate, state.time, camera_time});
  state = propagate(std::move(state), camera_time - state.time, config.accel_psd, config.drift_psd);
  if (pose)
  {
    if (trace)
      trace->push_back({FlushEvent::Kind::PoseUpdate, camera_time, camera_time});
    state = pose_update(std::move(state), pose->position, pose->sigma);
  }
  buffer.clear(camera_time);
  return state;
}

struct CameraEvent
{
  double t = 0.0;
  std::optional<PoseMeasurement> pose;
};

struct DropoutInterval
{
  double start = 0.0;
  double end = 0.0;
};

/// Removes pose updates inside any [start, end] interval; event times are kept so ranges
/// are still flushed at the camera cadence.
inline std::vector<CameraEvent> inject_dropout(std::span<const DropoutInterval> schedule,
                                               std::vector<CameraEvent> stream)
{
  for (auto& ev : stream)
    for (const auto& d : schedule)
      if (ev.t >= d.start && ev.t <= d.end)
        ev.pose.reset();
  return stream;
}

}  // namespace anchormap::ekf

#endif  // ANCHORMAP_EKF_FILTER_HPP_
