#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "evac3d/events.hpp"
#include "evac3d/geometry.hpp"
#include "evac3d/surface.hpp"

namespace evac3d {

inline constexpr double kDefaultAceTolerancePx = 1.5;

/// Straight piece of a contour generator (box or mesh silhouette edge,
/// cylinder side line). `n0`/`n1` are the normals of the two surface patches
/// meeting at the edge; they coincide on smooth generator lines.
struct ContourSegment {
  Vec3 a, b;
  Vec3 n0, n1;
};

/// Circular piece: center + radius (cos s u + sin s v) for s in [angle0, angle1].
/// The surface normal is radial from `normal_origin`; when `crease_normal` is
/// set (cylinder rims) it is blended with that cap normal.
struct ContourArc {
  Vec3 center;
  Vec3 u, v;
  double radius = 0.0;
  double angle0 = 0.0, angle1 = 0.0;
  Vec3 normal_origin;
  std::optional<Vec3> crease_normal;
};

using ContourPiece = std::variant<ContourSegment, ContourArc>;

/// Surface points whose viewing rays from `pose`'s camera center are tangent
/// to the surface.
struct ContourGenerator {
  Pose pose;
  std::vector<ContourPiece> pieces;

  /// Point at parameter s in [0, 1] along a piece.
  Vec3 point(const ContourPiece& piece, double s) const;
  /// Unit surface normal at that point, chosen inside the normal cone so that
  /// it is orthogonal to the viewing ray wherever the surface allows it.
  Vec3 normal(const ContourPiece& piece, double s) const;
};

/// Throws std::domain_error when the camera center is not strictly outside
/// the surface. Mesh silhouettes are filtered for self-occlusion with one
/// ray cast per edge midpoint.
ContourGenerator contour_generator(const SceneSurface& surface, const Pose& pose);

/// Image-space polylines approximating the projected contour generator.
struct ImageContour {
  struct Polyline {
    std::vector<Vec2> pixels;
    std::vector<Vec3> points;  // matching 3D points on the generator
  };
  std::vector<Polyline> polylines;

  /// Distance from a pixel to the nearest polyline segment (infinity if empty).
  double distance(const Vec2& pixel) const;
  double length() const;
};

/// Projects the generator, subdividing curved pieces so that consecutive
/// pixels are at most `max_step_px` apart. Parts behind the camera are dropped.
ImageContour project_contour(const ContourGenerator& gen, const CameraIntrinsics& intr,
                             double max_step_px = 2.0);

/// Labels each event ace iff its pixel lies within tol_px of the projected
/// contour generator at its interpolated pose; otherwise non_ace.
EventStream label_events(const EventStream& stream, const Trajectory& traj,
                         const CameraIntrinsics& intr, const SceneSurface& surface,
                         double tol_px = kDefaultAceTolerancePx, int threads = 1);

}  // namespace evac3d
