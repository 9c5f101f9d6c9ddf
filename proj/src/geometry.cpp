#include "evac3d/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "evac3d/errors.hpp"
#include "text_util.hpp"

namespace evac3d {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("sensor resolution must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw std::invalid_argument("principal point must lie inside the sensor");
  }
}

CameraIntrinsics CameraIntrinsics::upsampled(int factor) const {
  if (factor < 1) throw std::invalid_argument("upsampling factor must be at least 1");
  CameraIntrinsics out = *this;
  out.fx = fx * factor;
  out.fy = fy * factor;
  out.cx = (cx + 0.5) * factor - 0.5;
  out.cy = (cy + 0.5) * factor - 0.5;
  out.width = width * factor;
  out.height = height * factor;
  return out;
}

bool CameraIntrinsics::contains(const Vec2& pixel) const {
  return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < width && pixel.y() < height;
}

Pose::Pose(const Quat& q, const Vec3& t) : rotation(q.normalized()), translation(t) {}

Pose Pose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint) {
  Vec3 z = target - eye;
  if (z.norm() == 0.0) throw std::invalid_argument("look_at: eye coincides with target");
  z.normalize();
  Vec3 up = up_hint - up_hint.dot(z) * z;
  if (up.norm() < 1e-9) {
    // Hint parallel to the optical axis: fall back to the least aligned world axis.
    Eigen::Index axis = 0;
    z.cwiseAbs().minCoeff(&axis);
    Vec3 alt = Vec3::Unit(axis);
    up = alt - alt.dot(z) * z;
  }
  const Vec3 y = -up.normalized();
  const Vec3 x = y.cross(z);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Pose(Quat(r), eye);
}

Trajectory::Trajectory(std::vector<TimedPose> samples) : samples_(std::move(samples)) {
  for (std::size_t i = 1; i < samples_.size(); ++i) {
    if (!(samples_[i].t > samples_[i - 1].t)) {
      throw ValidationError("trajectory timestamps must be strictly increasing (sample " +
                            std::to_string(i) + ")");
    }
  }
  for (auto& s : samples_) s.pose.rotation.normalize();
}

double Trajectory::start_time() const {
  if (samples_.empty()) throw std::logic_error("empty trajectory");
  return samples_.front().t;
}

double Trajectory::end_time() const {
  if (samples_.empty()) throw std::logic_error("empty trajectory");
  return samples_.back().t;
}

bool Trajectory::covers(double t) const {
  return !samples_.empty() && t >= samples_.front().t && t <= samples_.back().t;
}

Vec3 backproject(const Vec2& pixel, const CameraIntrinsics& intr) {
  if (!intr.contains(pixel)) throw std::domain_error("backproject: pixel outside sensor");
  return Vec3((pixel.x() - intr.cx) / intr.fx, (pixel.y() - intr.cy) / intr.fy, 1.0).normalized();
}

Vec2 project(const Vec3& camera_point, const CameraIntrinsics& intr) {
  return Vec2(intr.fx * camera_point.x() / camera_point.z() + intr.cx,
              intr.fy * camera_point.y() / camera_point.z() + intr.cy);
}

Pose interpolate_pose(const Trajectory& traj, double t) {
  const auto& s = traj.samples();
  if (s.empty()) throw std::invalid_argument("interpolate_pose: empty trajectory");
  if (!traj.covers(t)) {
    throw ExtrapolationError("interpolate_pose: t=" + detail::format_double(t) +
                             " outside trajectory range");
  }
  // First sample with timestamp > t.
  auto hi = std::upper_bound(s.begin(), s.end(), t,
                             [](double v, const TimedPose& p) { return v < p.t; });
  auto lo = std::prev(hi);
  if (lo->t == t) return lo->pose;
  if (s.size() < 2) throw std::invalid_argument("interpolate_pose: need at least two samples");

  const double alpha = (t - lo->t) / (hi->t - lo->t);
  const Vec3 translation = (1.0 - alpha) * lo->pose.translation + alpha * hi->pose.translation;
  // Eigen's slerp follows the shorter arc (sign flip when the dot product is negative).
  const Quat rotation = lo->pose.rotation.slerp(alpha, hi->pose.rotation).normalized();
  return Pose(rotation, translation);
}

Ray pixel_ray(const Vec2& pixel, const Pose& pose, const CameraIntrinsics& intr) {
  Ray ray;
  ray.origin = pose.translation;
  ray.direction = (pose.rotation * backproject(pixel, intr)).normalized();
  return ray;
}

Ray event_ray(const Event& e, const Trajectory& traj, const CameraIntrinsics& intr) {
  return pixel_ray(Vec2(e.x, e.y), interpolate_pose(traj, e.t), intr);
}

Trajectory read_tum(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file " + path.string());
  std::vector<TimedPose> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_fields(detail::strip_comment(line), false);
    if (fields.empty()) continue;
    if (fields.size() != 8) throw ParseError("expected 8 fields: t tx ty tz qx qy qz qw", lineno);
    double v[8];
    for (int i = 0; i < 8; ++i) {
      auto parsed = detail::parse_number<double>(fields[i]);
      if (!parsed || !std::isfinite(*parsed)) {
        throw ParseError("invalid number '" + std::string(fields[i]) + "'", lineno);
      }
      v[i] = *parsed;
    }
    Quat q(v[7], v[4], v[5], v[6]);
    if (q.norm() < 1e-12) throw ParseError("zero quaternion", lineno);
    samples.push_back({v[0], Pose(q, Vec3(v[1], v[2], v[3]))});
  }
  return Trajectory(std::move(samples));
}

void write_tum(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory file " + path.string());
  out << "# t tx ty tz qx qy qz qw\n";
  for (const auto& s : traj.samples()) {
    const auto& p = s.pose;
    using detail::format_double;
    out << format_double(s.t) << ' ' << format_double(p.translation.x()) << ' '
        << format_double(p.translation.y()) << ' ' << format_double(p.translation.z()) << ' '
        << format_double(p.rotation.x()) << ' ' << format_double(p.rotation.y()) << ' '
        << format_double(p.rotation.z()) << ' ' << format_double(p.rotation.w()) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace evac3d
