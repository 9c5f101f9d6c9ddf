#include "evac3d/ace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "surface_util.hpp"

namespace evac3d {
namespace {

constexpr double kMinDepth = 1e-6;

/// Blend of two patch normals orthogonal to `view` (X - camera center).
Vec3 blend_normals(const Vec3& n0, const Vec3& n1, const Vec3& view) {
  if ((n0 - n1).squaredNorm() < 1e-24) return n0;
  const double f0 = n0.dot(view), f1 = n1.dot(view);
  if ((f0 > 0.0) == (f1 > 0.0) && f0 != 0.0 && f1 != 0.0) {
    return std::abs(f0) <= std::abs(f1) ? n0 : n1;
  }
  const double alpha = f0 / (f0 - f1);
  return ((1.0 - alpha) * n0 + alpha * n1).normalized();
}

void sphere_contour(const Sphere& s, const Vec3& eye, ContourGenerator& gen) {
  const Vec3 rel = eye - s.center;
  const double d = rel.norm();
  if (!(d > s.radius)) throw std::domain_error("contour_generator: camera inside sphere");
  const Vec3 w = rel / d;
  auto [u, v] = orthonormal_basis(w);
  ContourArc arc;
  arc.center = s.center + (s.radius * s.radius / d) * w;
  arc.u = u;
  arc.v = v;
  arc.radius = s.radius * std::sqrt(1.0 - (s.radius * s.radius) / (d * d));
  arc.angle0 = 0.0;
  arc.angle1 = 2.0 * std::numbers::pi;
  arc.normal_origin = s.center;
  gen.pieces.emplace_back(arc);
}

void box_contour(const Box& box, const Vec3& eye, ContourGenerator& gen) {
  const Vec3 q = eye - box.center;
  const Vec3& h = box.half_extents;
  if ((q.cwiseAbs() - h).maxCoeff() <= 0.0) {
    throw std::domain_error("contour_generator: camera inside box");
  }
  auto front = [&](int axis, double sign) { return sign * q[axis] - h[axis] > 0.0; };
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const int k = 3 - i - j;
      for (double si : {-1.0, 1.0}) {
        for (double sj : {-1.0, 1.0}) {
          if (front(i, si) == front(j, sj)) continue;
          Vec3 base = box.center;
          base[i] += si * h[i];
          base[j] += sj * h[j];
          ContourSegment seg;
          seg.a = base - h[k] * Vec3::Unit(k);
          seg.b = base + h[k] * Vec3::Unit(k);
          seg.n0 = si * Vec3::Unit(i);
          seg.n1 = sj * Vec3::Unit(j);
          gen.pieces.emplace_back(seg);
        }
      }
    }
  }
}

void cylinder_contour(const Cylinder& cyl, const Vec3& eye, ContourGenerator& gen) {
  const Vec3& a = cyl.axis;
  auto [u, v] = orthonormal_basis(a);
  const Vec3 q = eye - cyl.center;
  const double axial = q.dot(a);
  const Vec3 radial = q - axial * a;
  const double rho = radial.norm();
  if (rho <= cyl.radius && std::abs(axial) <= cyl.half_height) {
    throw std::domain_error("contour_generator: camera inside cylinder");
  }
  const double phi0 = std::atan2(radial.dot(v), radial.dot(u));
  const bool has_side = rho > cyl.radius;
  const double delta = has_side ? std::acos(cyl.radius / rho) : 0.0;

  // Side generator lines: radial normal orthogonal to the viewing ray.
  if (has_side) {
    for (double phi : {phi0 - delta, phi0 + delta}) {
      const Vec3 n = std::cos(phi) * u + std::sin(phi) * v;
      ContourSegment seg;
      seg.a = cyl.center + cyl.radius * n - cyl.half_height * a;
      seg.b = cyl.center + cyl.radius * n + cyl.half_height * a;
      seg.n0 = seg.n1 = n;
      gen.pieces.emplace_back(seg);
    }
  }
  // Rim arcs where cap and side facing disagree. The side faces the camera
  // on (phi0 - delta, phi0 + delta).
  for (double sign : {-1.0, 1.0}) {
    const bool cap_front = sign * axial - cyl.half_height > 0.0;
    ContourArc arc;
    arc.center = cyl.center + sign * cyl.half_height * a;
    arc.u = u;
    arc.v = v;
    arc.radius = cyl.radius;
    arc.normal_origin = arc.center;
    arc.crease_normal = sign * a;
    if (cap_front) {
      // Silhouette where the side faces away.
      if (has_side) {
        arc.angle0 = phi0 + delta;
        arc.angle1 = phi0 - delta + 2.0 * std::numbers::pi;
      } else {
        arc.angle0 = 0.0;
        arc.angle1 = 2.0 * std::numbers::pi;
      }
    } else {
      if (!has_side) continue;
      arc.angle0 = phi0 - delta;
      arc.angle1 = phi0 + delta;
    }
    if (arc.angle1 > arc.angle0) gen.pieces.emplace_back(arc);
  }
}

void mesh_contour(const MeshSurface& surf, const Vec3& eye, ContourGenerator& gen) {
  if (surf.contains(eye)) throw std::domain_error("contour_generator: camera inside mesh");
  const auto& mesh = surf.mesh();
  const auto& normals = surf.face_normals();
  for (const auto& e : surf.edges()) {
    const Vec3& pa = mesh.vertices[e.a];
    const bool front0 = normals[e.f0].dot(eye - pa) > 0.0;
    const bool front1 = normals[e.f1].dot(eye - pa) > 0.0;
    if (front0 == front1) continue;
    const Vec3& pb = mesh.vertices[e.b];
    const Vec3 mid = 0.5 * (pa + pb);
    const Vec3 to_mid = mid - eye;
    const double dist = to_mid.norm();
    const Ray ray{eye, to_mid / dist};
    if (surf.intersect(ray, 0.0, dist * (1.0 - 1e-7), {e.f0, e.f1})) continue;  // occluded
    gen.pieces.emplace_back(ContourSegment{pa, pb, normals[e.f0], normals[e.f1]});
  }
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + s * ab)).norm();
}

}  // namespace

Vec3 ContourGenerator::point(const ContourPiece& piece, double s) const {
  if (const auto* seg = std::get_if<ContourSegment>(&piece)) return seg->a + s * (seg->b - seg->a);
  const auto& arc = std::get<ContourArc>(piece);
  const double ang = arc.angle0 + s * (arc.angle1 - arc.angle0);
  return arc.center + arc.radius * (std::cos(ang) * arc.u + std::sin(ang) * arc.v);
}

Vec3 ContourGenerator::normal(const ContourPiece& piece, double s) const {
  const Vec3 x = point(piece, s);
  const Vec3 view = x - pose.translation;
  if (const auto* seg = std::get_if<ContourSegment>(&piece)) return blend_normals(seg->n0, seg->n1, view);
  const auto& arc = std::get<ContourArc>(piece);
  const Vec3 radial = (x - arc.normal_origin).normalized();
  if (!arc.crease_normal) return radial;
  return blend_normals(*arc.crease_normal, radial, view);
}

ContourGenerator contour_generator(const SceneSurface& surface, const Pose& pose) {
  ContourGenerator gen;
  gen.pose = pose;
  const Vec3& eye = pose.translation;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) sphere_contour(s, eye, gen);
        else if constexpr (std::is_same_v<T, Box>) box_contour(s, eye, gen);
        else if constexpr (std::is_same_v<T, Cylinder>) cylinder_contour(s, eye, gen);
        else mesh_contour(*s, eye, gen);
      },
      surface.shape());
  return gen;
}

double ImageContour::distance(const Vec2& pixel) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& line : polylines) {
    if (line.pixels.size() == 1) best = std::min(best, (pixel - line.pixels[0]).norm());
    for (std::size_t i = 1; i < line.pixels.size(); ++i) {
      best = std::min(best, point_segment_distance(pixel, line.pixels[i - 1], line.pixels[i]));
    }
  }
  return best;
}

double ImageContour::length() const {
  double len = 0.0;
  for (const auto& line : polylines) {
    for (std::size_t i = 1; i < line.pixels.size(); ++i) len += (line.pixels[i] - line.pixels[i - 1]).norm();
  }
  return len;
}

ImageContour project_contour(const ContourGenerator& gen, const CameraIntrinsics& intr,
                             double max_step_px) {
  ImageContour out;
  for (const auto& piece : gen.pieces) {
    std::size_t n = 1;
    if (std::holds_alternative<ContourArc>(piece)) {
      // Estimate projected length to pick the subdivision.
      constexpr int kProbe = 64;
      double len = 0.0;
      std::optional<Vec2> prev;
      for (int i = 0; i <= kProbe; ++i) {
        const Vec3 c = gen.pose.to_camera(gen.point(piece, static_cast<double>(i) / kProbe));
        if (c.z() <= kMinDepth) {
          prev.reset();
          continue;
        }
        const Vec2 px = project(c, intr);
        if (prev) len += (px - *prev).norm();
        prev = px;
      }
      n = std::max<std::size_t>(16, static_cast<std::size_t>(std::ceil(len / max_step_px)));
    }
    ImageContour::Polyline line;
    auto flush = [&] {
      if (!line.pixels.empty()) out.polylines.push_back(std::move(line));
      line = {};
    };
    Vec3 prev_cam = Vec3::Zero();
    Vec3 prev_world = Vec3::Zero();
    bool prev_front = false;
    for (std::size_t i = 0; i <= n; ++i) {
      const Vec3 x = gen.point(piece, static_cast<double>(i) / n);
      const Vec3 c = gen.pose.to_camera(x);
      const bool is_front = c.z() > kMinDepth;
      if (i > 0 && is_front != prev_front) {
        // Clip the crossing of the near plane.
        const double s = (kMinDepth - prev_cam.z()) / (c.z() - prev_cam.z());
        const Vec3 xc = prev_world + s * (x - prev_world);
        const Vec3 cc = gen.pose.to_camera(xc);
        if (is_front) {
          line.pixels.push_back(project(cc, intr));
          line.points.push_back(xc);
        } else {
          line.pixels.push_back(project(cc, intr));
          line.points.push_back(xc);
          flush();
        }
      }
      if (is_front) {
        line.pixels.push_back(project(c, intr));
        line.points.push_back(x);
      }
      prev_cam = c;
      prev_world = x;
      prev_front = is_front;
    }
    flush();
  }
  return out;
}

EventStream label_events(const EventStream& stream, const Trajectory& traj,
                         const CameraIntrinsics& intr, const SceneSurface& surface, double tol_px,
                         int threads) {
  if (!(tol_px > 0.0)) throw std::invalid_argument("label_events: tol_px must be positive");
  EventStream out = stream;
  auto& events = out.events;
  auto work = [&](std::size_t begin, std::size_t end) {
    double cached_t = std::numeric_limits<double>::quiet_NaN();
    ImageContour contour;
    for (std::size_t i = begin; i < end; ++i) {
      Event& e = events[i];
      if (e.t != cached_t) {
        contour = project_contour(contour_generator(surface, interpolate_pose(traj, e.t)), intr);
        cached_t = e.t;
      }
      e.label = contour.distance(Vec2(e.x, e.y)) <= tol_px ? EventLabel::ace : EventLabel::non_ace;
    }
  };
  const std::size_t n = events.size();
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2 * workers) {
    work(0, n);
    return out;
  }
  // Exceptions are rethrown from the calling thread.
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = n * w / workers, end = n * (w + 1) / workers;
      pool.emplace_back([&, w, begin, end] {
        try {
          work(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return out;
}

}  // namespace evac3d
