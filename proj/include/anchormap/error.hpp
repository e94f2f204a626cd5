#ifndef ANCHORMAP_ERROR_HPP_
#define ANCHORMAP_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace anchormap
{
enum class ErrorCode
{
  DegenerateGeometry,
  MismatchedAnchor,
  InsufficientSamples,
  RankDeficient,
  SingularNormalMatrix,
  SingularGeometry,
  NoFeasibleSolution,
  IllConditionedSpline,
  UnknownAnchor,
  OutOfOrderBuffer,
  InvalidArgument,
  ScenarioInvalid,
  SchemaVersion,
  Io,
};

constexpr const char* to_string(ErrorCode code)
{
  switch (code)
  {
    case ErrorCode::DegenerateGeometry:
      return "DegenerateGeometry";
    case ErrorCode::MismatchedAnchor:
      return "MismatchedAnchor";
    case ErrorCode::InsufficientSamples:
      return "InsufficientSamples";
    case ErrorCode::RankDeficient:
      return "RankDeficient";
    case ErrorCode::SingularNormalMatrix:
      return "SingularNormalMatrix";
    case ErrorCode::SingularGeometry:
      return "SingularGeometry";
    case ErrorCode::NoFeasibleSolution:
      return "NoFeasibleSolution";
    case ErrorCode::IllConditionedSpline:
      return "IllConditionedSpline";
    case ErrorCode::UnknownAnchor:
      return "UnknownAnchor";
    case ErrorCode::OutOfOrderBuffer:
      return "OutOfOrderBuffer";
    case ErrorCode::InvalidArgument:
      return "InvalidArgument";
    case ErrorCode::ScenarioInvalid:
      return "ScenarioInvalid";
    case ErrorCode::SchemaVersion:
      return "SchemaVersion";
    case ErrorCode::Io:
      return "Io";
  }
  return "Unknown";
}

///
/// \brief Single exception type for the library. The code is what callers branch on;
/// the message carries context (condition numbers, paths, ids).
///
class Error : public std::runtime_error
{
public:
  Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
  {
  }

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace anchormap

#endif  // ANCHORMAP_ERROR_HPP_
