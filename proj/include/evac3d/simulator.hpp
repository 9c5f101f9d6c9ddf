#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evac3d/carving.hpp"
#include "evac3d/events.hpp"
#include "evac3d/geometry.hpp"
#include "evac3d/surface.hpp"

namespace evac3d {

enum class OrbitKind { circular, octahedral, random_sphere };

std::string to_string(OrbitKind kind);
/// Throws ConfigError for unknown names.
OrbitKind orbit_kind_from_string(const std::string& name);

/// Camera path on a sphere around `look_at`; world up is +z.
struct OrbitSpec {
  OrbitKind kind = OrbitKind::random_sphere;
  double radius = 3.0;
  double duration = 10.0;  // seconds
  double pose_rate = 200.0;  // Hz
  Vec3 look_at = Vec3::Zero();
  std::uint64_t seed = 0;  // random_sphere only
  int waypoints = 12;      // random_sphere only

  /// Throws ConfigError. Pass the scene's bounding radius around look_at to
  /// also require the orbit to stay outside it.
  void validate(double scene_radius = 0.0) const;
};

/// round(duration * pose_rate) samples at t = k / pose_rate.
///   circular:      one revolution in the xy-plane
///   octahedral:    great-circle arcs +x, +y, +z, -x, -y, -z, back to +x
///   random_sphere: Catmull-Rom through uniform random directions
/// Every pose looks at look_at; the image up vector is carried over from the
/// previous pose.
Trajectory make_trajectory(const OrbitSpec& spec);

enum class EmissionTiming { poisson, uniform };

struct EmitterSpec {
  double event_rate = 20000.0;  // contour events per second
  double jitter_px = 0.0;       // Gaussian sigma, pixels
  double clutter_rate = 0.0;    // uniform background events per second
  std::uint64_t seed = 0;
  EmissionTiming timing = EmissionTiming::poisson;

  void validate() const;
};

/// Contour events sampled on the projected contour generator at
/// microsecond-quantized timestamps, labeled ace, plus uniformly placed clutter
/// labeled non_ace. Polarity is +1 when the pixel is entering the silhouette,
/// -1 when leaving, random when the motion is undetectable. Deterministic for
/// a given spec. Throws ValidationError listing the offending timestamps when
/// the contour leaves the image.
EventStream emit_contour_events(const SceneSurface& surface, const Trajectory& traj,
                                const CameraIntrinsics& intr, const EmitterSpec& spec);

/// n_views silhouettes at t = t0 + k (t1 - t0) / n_views. A pixel is set when
/// its center ray hits the surface. Throws ValidationError listing the
/// offending timestamps when a silhouette touches the image border.
std::vector<MaskView> render_masks(const SceneSurface& surface, const Trajectory& traj,
                                   const CameraIntrinsics& intr, int n_views);

/// Binary PGM (P5, maxval 255): set pixels 255, others 0.
void write_pgm(const Mask& mask, const std::filesystem::path& path);
/// Any nonzero gray value reads as set.
Mask read_pgm(const std::filesystem::path& path);

}  // namespace evac3d
