#ifndef ANCHORMAP_NL_REFINE_HPP_
#define ANCHORMAP_NL_REFINE_HPP_

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anchormap/range_model.hpp"

namespace anchormap
{
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

/// Parameter vector layout [p_A, gamma, beta].
struct AnchorParams
{
  Vec3 position = Vec3::Zero();
  double gamma = 0.0;
  double beta = 1.0;

  Vec5 vector() const
  {
    Vec5 x;
    x << position, gamma, beta;
    return x;
  }

  static AnchorParams from_vector(const Vec5& x) { return {x.head<3>(), x(3), x(4)}; }

  Anchor as_anchor(int id = 0) const { return {id, position, beta, gamma}; }
};

///
/// \brief Levenberg-Marquardt settings.
///
/// A step is accepted when it does not increase the cost; lambda is then multiplied by
/// lambda_down, otherwise by lambda_up. Iteration stops when the accepted cost changes by
/// less than cost_tol relative to the previous cost, when the cost falls below
/// abs_cost_floor, when the step is below step_tol relative to |x|, or after max_iters.
///
struct LmConfig
{
  double lambda_init = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  int max_iters = 100;
  double cost_tol = 1e-10;
  double abs_cost_floor = 1e-26;
  double step_tol = 1e-12;
  /// beta below this is rejected as a step
  double beta_min = 0.1;

  void validate() const
  {
    if (!(lambda_init > 0.0) || !(lambda_up > 1.0) || !(lambda_down > 0.0 && lambda_down < 1.0) || max_iters < 1)
      throw Error(ErrorCode::InvalidArgument, "invalid LM configuration");
  }
};

struct LmIteration
{
  double lambda = 0.0;
  double candidate_cost = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
};

struct RefinedSolution
{
  AnchorParams params;
  /// covariance of [p_A, gamma, beta]
  Mat5 covariance = Mat5::Zero();
  /// 0.5 * sum of squared residuals
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  double final_lambda = 0.0;
  std::vector<double> accepted_costs;
  std::vector<LmIteration> trace;
};

///
/// \brief Residuals r_k = z_k - h(params, p_Uk) and the Jacobian of the prediction h.
///
/// Columns of the Jacobian are d h / d [p_A, gamma, beta]; the residual Jacobian is its
/// negative.
///
inline std::pair<Eigen::VectorXd, Eigen::Matrix<double, Eigen::Dynamic, 5>>
residuals_and_jacobian(const AnchorParams& params, std::span<const RangeMeasurement> samples)
{
  const auto M = static_cast<Eigen::Index>(samples.size());
  Eigen::VectorXd r(M);
  Eigen::Matrix<double, Eigen::Dynamic, 5> J(M, 5);
  const Anchor anchor = params.as_anchor();
  for (Eigen::Index k = 0; k < M; ++k)
  {
    const auto& s = samples[static_cast<std::size_t>(k)];
    const Vec3 diff = detail::checked_difference(s.tag_position, anchor.position);
    const double d = diff.norm();
    r(k) = s.range - (anchor.beta * d + anchor.gamma);
    J.block<1, 3>(k, 0) = -anchor.beta * diff.transpose() / d;
    J(k, 3) = 1.0;
    J(k, 4) = d;
  }
  return {r, J};
}

namespace detail
{
inline double lm_cost(const AnchorParams& p, std::span<const RangeMeasurement> samples)
{
  double c = 0.0;
  for (const auto& s : samples)
  {
    const double e = s.range - predict_range(s.tag_position, p.as_anchor());
    c += e * e;
  }
  return 0.5 * c;
}

inline std::optional<Vec5> damped_step(const Mat5& JtJ, const Vec5& Jtr, double lambda)
{
  Mat5 A = JtJ;
  A.diagonal() += lambda * JtJ.diagonal();
  Eigen::FullPivLU<Mat5> lu(A);
  if (!lu.isInvertible() || lu.rcond() < 1e-15)
    return std::nullopt;
  Vec5 dx = lu.solve(Jtr);
  if (!dx.allFinite())
    return std::nullopt;
  return dx;
}
}  // namespace detail

inline RefinedSolution refine(const AnchorParams& initial, std::span<const RangeMeasurement> samples,
                              const LmConfig& config = {})
{
  config.validate();
  if (samples.size() < 5)
    throw Error(ErrorCode::InsufficientSamples,
                "refinement needs at least 5 samples, got " + std::to_string(samples.size()));
  if (!initial.vector().allFinite())
    throw Error(ErrorCode::InvalidArgument, "non-finite initial guess");

  const double lambda_ceiling = 1e8 * config.lambda_init;
  RefinedSolution out;
  AnchorParams x = initial;
  double lambda = config.lambda_init;
  double cost = detail::lm_cost(x, samples);
  out.accepted_costs.push_back(cost);

  for (int it = 0; it < config.max_iters; ++it)
  {
    out.iterations = it + 1;
    const auto [r, J] = residuals_and_jacobian(x, samples);
    const Mat5 JtJ = J.transpose() * J;
    // J is the prediction Jacobian, so the Gauss-Newton direction is +J^T r
    const Vec5 Jtr = J.transpose() * r;

    std::optional<Vec5> dx = detail::damped_step(JtJ, Jtr, lambda);
    while (!dx)
    {
      lambda *= config.lambda_up;
      if (lambda > lambda_ceiling)
        throw Error(ErrorCode::SingularNormalMatrix, "damped normal matrix singular at lambda " + std::to_string(lambda));
      dx = detail::damped_step(JtJ, Jtr, lambda);
    }

    const AnchorParams candidate = AnchorParams::from_vector(x.vector() + *dx);
    LmIteration rec{lambda, 0.0, dx->norm(), false};

    bool accept = candidate.beta >= config.beta_min;
    double new_cost = cost;
    if (accept)
    {
      try
      {
        new_cost = detail::lm_cost(candidate, samples);
      }
      catch (const Error&)
      {
        accept = false;
      }
      accept = accept && std::isfinite(new_cost) && new_cost <= cost;
    }
    rec.candidate_cost = accept ? new_cost : std::numeric_limits<double>::infinity();
    rec.accepted = accept;
    out.trace.push_back(rec);

    const bool small_step = dx->norm() <= config.step_tol * (x.vector().norm() + config.step_tol);
    if (accept)
    {
      const double old_cost = cost;
      x = candidate;
      cost = new_cost;
      out.accepted_costs.push_back(cost);
      lambda *= config.lambda_down;
      if (old_cost - new_cost <= config.cost_tol * old_cost || new_cost <= config.abs_cost_floor || small_step)
      {
        out.converged = true;
        break;
      }
    }
    else
    {
      lambda *= config.lambda_up;
      if (small_step)
      {
        out.converged = true;
        break;
      }
    }
  }

  // covariance at the accepted optimum with the terminal damping
  const auto [r, J] = residuals_and_jacobian(x, samples);
  const Mat5 JtJ = J.transpose() * J;
  Mat5 A = JtJ;
  A.diagonal() += lambda * JtJ.diagonal();
  const double dof = std::max<double>(static_cast<double>(samples.size()) - 5.0, 1.0);
  const double mse = 2.0 * cost / dof;
  Mat5 cov = mse * A.fullPivLu().inverse();
  out.covariance = 0.5 * (cov + cov.transpose());

  out.params = x;
  out.final_cost = cost;
  out.final_lambda = lambda;
  return out;
}

/// Per-anchor outcome of refine_all; exactly one of solution / error is set.
struct AnchorRefineOutcome
{
  int anchor_id = 0;
  std::optional<RefinedSolution> solution;
  std::optional<Error> error;
};

///
/// \brief Refines every anchor over the shared trajectory. Residuals of different anchors
/// share no parameters, so the joint problem is block diagonal and splits per anchor.
/// A failure for one anchor is reported in its outcome and does not affect the others.
///
inline std::vector<AnchorRefineOutcome> refine_all(const std::map<int, AnchorParams>& initials,
                                                   const std::map<int, std::vector<RangeMeasurement>>& samples,
                                                   const LmConfig& config = {})
{
  std::vector<AnchorRefineOutcome> out;
  out.reserve(initials.size());
  static const std::vector<RangeMeasurement> kEmpty;
  for (const auto& [id, init] : initials)
  {
    AnchorRefineOutcome res;
    res.anchor_id = id;
    const auto it = samples.find(id);
    const auto& group = it == samples.end() ? kEmpty : it->second;
    try
    {
      res.solution = refine(init, group, config);
    }
    catch (const Error& e)
    {
      res.error = e;
    }
    out.push_back(std::move(res));
  }
  return out;
}

}  // namespace anchormap

#endif  // ANCHORMAP_NL_REFINE_HPP_
