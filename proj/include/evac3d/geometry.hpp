#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "evac3d/event.hpp"

namespace evac3d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Ideal pinhole camera. Pixel (x, y) denotes the center of pixel column x,
/// row y; the sensor covers [0, width) x [0, height).
struct CameraIntrinsics {
  double fx = 400.0;
  double fy = 400.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
  bool contains(const Vec2& pixel) const;
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  /// Same field of view sampled with `factor` times as many pixels per axis.
  CameraIntrinsics upsampled(int factor) const;

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// World-from-camera rigid transform. `translation` is the camera center in
/// world coordinates; `rotation` maps camera-frame directions to world.
struct Pose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Quat& q, const Vec3& t);

  Vec3 to_world(const Vec3& camera_point) const { return rotation * camera_point + translation; }
  Vec3 to_camera(const Vec3& world_point) const {
    return rotation.conjugate() * (world_point - translation);
  }
  Vec3 optical_axis() const { return rotation * Vec3::UnitZ(); }

  /// Camera at `eye` whose optical axis passes through `target`. The image
  /// "up" direction (-y) is kept as close as possible to `up_hint`.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint);
};

struct TimedPose {
  double t = 0.0;
  Pose pose;
};

/// Time-sorted camera poses, linear in translation and spherical-linear in
/// rotation between samples. No extrapolation.
class Trajectory {
 public:
  Trajectory() = default;
  /// Throws ValidationError unless timestamps are strictly increasing.
  explicit Trajectory(std::vector<TimedPose> samples);

  const std::vector<TimedPose>& samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  double start_time() const;
  double end_time() const;
  bool covers(double t) const;

 private:
  std::vector<TimedPose> samples_;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();

  Vec3 at(double s) const { return origin + s * direction; }
};

/// Unit viewing direction (camera frame) through a pixel. Throws
/// std::domain_error when the pixel lies outside the sensor.
Vec3 backproject(const Vec2& pixel, const CameraIntrinsics& intr);

/// Forward pinhole map of a camera-frame point with positive depth.
Vec2 project(const Vec3& camera_point, const CameraIntrinsics& intr);

/// Throws ExtrapolationError when t lies outside the sample range and
/// std::invalid_argument for trajectories with fewer than two samples
/// (unless t hits the single sample exactly).
Pose interpolate_pose(const Trajectory& traj, double t);

Ray pixel_ray(const Vec2& pixel, const Pose& pose, const CameraIntrinsics& intr);
Ray event_ray(const Event& e, const Trajectory& traj, const CameraIntrinsics& intr);

/// TUM format: "t tx ty tz qx qy qz qw" per line, '#' comments.
Trajectory read_tum(const std::filesystem::path& path);
void write_tum(const Trajectory& traj, const std::filesystem::path& path);

}  // namespace evac3d
