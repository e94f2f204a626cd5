#ifndef ANCHORMAP_WAYPOINT_VOLUME_HPP_
#define ANCHORMAP_WAYPOINT_VOLUME_HPP_

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "anchormap/types.hpp"

namespace anchormap
{
using Vec2 = Eigen::Vector2d;

///
/// \brief True when p lies inside or on the boundary of a simple polygon.
///
/// Crossing-number test with half-open edge rules (the point-in-polygon scheme of Hormann
/// and Agathos); points on an edge are reported as inside.
///
inline bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p, double eps = 1e-12)
{
  const std::size_t n = poly.size();
  if (n < 3)
    return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++)
  {
    const Vec2& a = poly[j];
    const Vec2& b = poly[i];
    // boundary
    const Vec2 ab = b - a;
    const Vec2 ap = p - a;
    const double cross = ab.x() * ap.y() - ab.y() * ap.x();
    if (std::abs(cross) <= eps * std::max(1.0, ab.norm()) && ap.dot(ab) >= -eps && (p - b).dot(-ab) >= -eps)
      return true;
    if ((a.y() > p.y()) != (b.y() > p.y()))
    {
      const double x_at = a.x() + (p.y() - a.y()) * ab.x() / ab.y();
      if (p.x() < x_at)
        inside = !inside;
    }
  }
  return inside;
}

///
/// \brief Operational flight volume: a cuboid centered at `center` with extents
/// length (x), width (y), height (z), optionally restricted to a prism with a polygonal
/// footprint. The bounding cuboid is split into grid[0] x grid[1] x grid[2] subcubes, one
/// per waypoint; each subcube holds resolution[0] x resolution[1] x resolution[2] candidate
/// positions at the centers of its lattice cells.
///
struct FlightVolume
{
  Vec3 center = Vec3::Zero();
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  std::array<int, 3> grid{2, 2, 2};
  std::array<int, 3> resolution{20, 20, 20};
  /// optional footprint in global x/y; empty means the full cuboid
  std::vector<Vec2> footprint;

  void validate() const
  {
    if (!(length > 0.0 && width > 0.0 && height > 0.0))
      throw Error(ErrorCode::InvalidArgument, "flight volume extents must be positive");
    for (int k = 0; k < 3; ++k)
      if (grid[k] < 1 || resolution[k] < 1)
        throw Error(ErrorCode::InvalidArgument, "grid and resolution counts must be >= 1");
  }

  Vec3 extent() const { return {length, width, height}; }
  Vec3 min_corner() const { return center - 0.5 * extent(); }
  Vec3 max_corner() const { return center + 0.5 * extent(); }

  int waypoint_count() const { return grid[0] * grid[1] * grid[2]; }

  Vec3 subcube_size() const
  {
    return extent().cwiseQuotient(Vec3(grid[0], grid[1], grid[2]));
  }

  /// Subcube j in x-fastest order.
  Vec3 subcube_min(int j) const
  {
    const int ix = j % grid[0];
    const int iy = (j / grid[0]) % grid[1];
    const int iz = j / (grid[0] * grid[1]);
    return min_corner() + subcube_size().cwiseProduct(Vec3(ix, iy, iz));
  }

  /// Candidate position for waypoint j with lattice index idx.
  Vec3 grid_point(int j, const std::array<int, 3>& idx) const
  {
    const Vec3 cell = subcube_size().cwiseQuotient(Vec3(resolution[0], resolution[1], resolution[2]));
    return subcube_min(j) + cell.cwiseProduct(Vec3(idx[0] + 0.5, idx[1] + 0.5, idx[2] + 0.5));
  }

  /// Closed-set containment (faces count as inside).
  bool contains(const Vec3& p) const
  {
    const Vec3 lo = min_corner();
    const Vec3 hi = max_corner();
    const double tol = 1e-12 * std::max(1.0, extent().maxCoeff());
    for (int k = 0; k < 3; ++k)
      if (p(k) < lo(k) - tol || p(k) > hi(k) + tol)
        return false;
    if (footprint.empty())
      return true;
    return point_in_polygon(footprint, p.head<2>());
  }
};

inline bool contains(const FlightVolume& volume, const Vec3& point) { return volume.contains(point); }

}  // namespace anchormap

#endif  // ANCHORMAP_WAYPOINT_VOLUME_HPP_
