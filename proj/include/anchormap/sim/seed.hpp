#ifndef ANCHORMAP_SIM_SEED_HPP_
#define ANCHORMAP_SIM_SEED_HPP_

#include <cstdint>
#include <initializer_list>

namespace anchormap::sim
{
/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z)
{
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

///
/// Counter-based seed splitting: the sub-seed is the root seed folded with each counter
/// in turn, seed = mix64(seed ^ mix64(counter)). The pipeline uses the counter path
/// (realization, stream, anchor id), so any sub-seed can be derived without touching the
/// others and parallel realizations consume independent streams.
///
constexpr std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path)
{
  std::uint64_t s = mix64(root);
  for (std::uint64_t c : path)
    s = mix64(s ^ mix64(c + 0x632be59bd9b4e019ULL));
  return s;
}

/// Stream ids used by the pipeline and the fusion demo.
enum Stream : std::uint64_t
{
  kInitialTrajectory = 1,
  kInitialRanges = 2,
  kRandomWaypoints = 3,
  kRandomWaypointRanges = 4,
  kOptimizer = 5,
  kOptimalWaypointRanges = 6,
  kFusionTruth = 7,
  kFusionPose = 8,
  kFusionRanges = 9,
  kAnchorPlacement = 10,
};

}  // namespace anchormap::sim

#endif  // ANCHORMAP_SIM_SEED_HPP_
