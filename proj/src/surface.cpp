#include "evac3d/surface.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>

#include "evac3d/errors.hpp"
#include "evac3d/metrics.hpp"
#include "surface_util.hpp"

namespace evac3d {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool ray_box(const Ray& ray, const Eigen::AlignedBox3d& box, double t_min, double t_max) {
  for (int i = 0; i < 3; ++i) {
    const double inv = 1.0 / ray.direction[i];
    double t0 = (box.min()[i] - ray.origin[i]) * inv;
    double t1 = (box.max()[i] - ray.origin[i]) * inv;
    if (inv < 0.0) std::swap(t0, t1);
    // NaN from 0 * inf (origin on slab plane, zero direction) keeps the interval.
    if (t0 > t_min) t_min = t0;
    if (t1 < t_max) t_max = t1;
    if (t_max < t_min) return false;
  }
  return true;
}

// Moller-Trumbore; returns t or +inf.
double ray_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pv = ray.direction.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-300) return kInf;
  const double inv = 1.0 / det;
  const Vec3 tv = ray.origin - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return kInf;
  const Vec3 qv = tv.cross(e1);
  const double v = ray.direction.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return kInf;
  return e2.dot(qv) * inv;
}

Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Ericson, Real-Time Collision Detection, 5.1.5.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

std::optional<double> intersect_sphere(const Sphere& s, const Ray& ray, double t_min) {
  const Vec3 oc = ray.origin - s.center;
  const double b = oc.dot(ray.direction);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  if (-b - sq > t_min) return -b - sq;
  if (-b + sq > t_min) return -b + sq;
  return std::nullopt;
}

std::optional<double> intersect_box(const Box& box, const Ray& ray, double t_min) {
  double t_enter = -kInf, t_exit = kInf;
  for (int i = 0; i < 3; ++i) {
    const double lo = box.center[i] - box.half_extents[i];
    const double hi = box.center[i] + box.half_extents[i];
    if (ray.direction[i] == 0.0) {
      if (ray.origin[i] < lo || ray.origin[i] > hi) return std::nullopt;
      continue;
    }
    double t0 = (lo - ray.origin[i]) / ray.direction[i];
    double t1 = (hi - ray.origin[i]) / ray.direction[i];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit) return std::nullopt;
  if (t_enter > t_min) return t_enter;
  if (t_exit > t_min) return t_exit;
  return std::nullopt;
}

std::optional<double> intersect_cylinder(const Cylinder& cyl, const Ray& ray, double t_min) {
  const Vec3& a = cyl.axis;
  const Vec3 q = ray.origin - cyl.center;
  const double qa = q.dot(a), da = ray.direction.dot(a);
  const Vec3 qp = q - qa * a, dp = ray.direction - da * a;
  double best = kInf;
  // Side.
  const double A = dp.squaredNorm();
  if (A > 0.0) {
    const double B = qp.dot(dp), C = qp.squaredNorm() - cyl.radius * cyl.radius;
    const double disc = B * B - A * C;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-B - sq) / A, (-B + sq) / A}) {
        if (t > t_min && t < best && std::abs(qa + t * da) <= cyl.half_height) best = t;
      }
    }
  }
  // Caps.
  if (da != 0.0) {
    for (double s : {-1.0, 1.0}) {
      const double t = (s * cyl.half_height - qa) / da;
      if (t > t_min && t < best && (qp + t * dp).squaredNorm() <= cyl.radius * cyl.radius) best = t;
    }
  }
  if (best == kInf) return std::nullopt;
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------

MeshSurface::MeshSurface(TriMesh mesh) : mesh_(std::move(mesh)) {
  mesh_.validate();
  if (!is_watertight(mesh_)) throw ValidationError("scene mesh must be watertight");
  normals_.reserve(mesh_.faces.size());
  for (std::size_t f = 0; f < mesh_.faces.size(); ++f) normals_.push_back(mesh_.face_normal(f));

  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (std::size_t f = 0; f < mesh_.faces.size(); ++f) {
    const auto& t = mesh_.faces[f];
    for (int k = 0; k < 3; ++k) {
      auto key = std::minmax(t[k], t[(k + 1) % 3]);
      edge_faces[{key.first, key.second}].push_back(static_cast<int>(f));
    }
  }
  edges_.reserve(edge_faces.size());
  for (const auto& [key, fs] : edge_faces) edges_.push_back({key.first, key.second, fs[0], fs[1]});

  order_.resize(mesh_.faces.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  nodes_.reserve(2 * order_.size());
  build(0, static_cast<int>(order_.size()));
}

int MeshSurface::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  Eigen::AlignedBox3d centroids;
  for (int i = begin; i < end; ++i) {
    const auto& t = mesh_.faces[order_[i]];
    for (int k = 0; k < 3; ++k) node.box.extend(mesh_.vertices[t[k]]);
    centroids.extend((mesh_.vertices[t[0]] + mesh_.vertices[t[1]] + mesh_.vertices[t[2]]) / 3.0);
  }
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= 4) return index;

  Eigen::Index axis = 0;
  centroids.sizes().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  auto centroid_on_axis = [&](int f) {
    const auto& t = mesh_.faces[f];
    return mesh_.vertices[t[0]][axis] + mesh_.vertices[t[1]][axis] + mesh_.vertices[t[2]][axis];
  };
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return centroid_on_axis(a) < centroid_on_axis(b); });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

std::optional<RayHit> MeshSurface::intersect(const Ray& ray, double t_min, double t_max,
                                             const std::vector<int>& ignore) const {
  std::optional<RayHit> best;
  double best_t = t_max;
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (!ray_box(ray, node.box, t_min, best_t)) continue;
    if (node.left >= 0) {
      stack.push_back(node.left);
      stack.push_back(node.right);
      continue;
    }
    for (int i = node.begin; i < node.end; ++i) {
      const int f = order_[i];
      if (std::find(ignore.begin(), ignore.end(), f) != ignore.end()) continue;
      const auto& tri = mesh_.faces[f];
      const double t = ray_triangle(ray, mesh_.vertices[tri[0]], mesh_.vertices[tri[1]],
                                    mesh_.vertices[tri[2]]);
      if (t > t_min && t < best_t) {
        best_t = t;
        best = RayHit{t, f};
      }
    }
  }
  return best;
}

bool MeshSurface::contains(const Vec3& p) const {
  // Crossing parity along three skew directions, majority vote.
  static const Vec3 dirs[3] = {Vec3(0.5773, 0.5774, 0.5775).normalized(),
                               Vec3(-0.3122, 0.8123, -0.4926).normalized(),
                               Vec3(0.7071, -0.1123, -0.6981).normalized()};
  int inside_votes = 0;
  for (const auto& d : dirs) {
    Ray ray{p, d};
    int crossings = 0;
    double t = 0.0;
    std::vector<int> skip;
    while (auto hit = intersect(ray, t, kInf, skip)) {
      ++crossings;
      t = hit->t;
      skip.assign(1, hit->face);
      if (crossings > 1000) break;
    }
    inside_votes += crossings % 2;
  }
  return inside_votes >= 2;
}

double MeshSurface::distance(const Vec3& p) const {
  double best = kInf;
  for (const auto& t : mesh_.faces) {
    const Vec3 q = closest_on_triangle(p, mesh_.vertices[t[0]], mesh_.vertices[t[1]], mesh_.vertices[t[2]]);
    best = std::min(best, (q - p).squaredNorm());
  }
  return std::sqrt(best);
}

// ---------------------------------------------------------------------------

SceneSurface::SceneSurface(Sphere s) : shape_(s) {
  if (!(s.radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
}

SceneSurface::SceneSurface(Box b) : shape_(b) {
  if (!(b.half_extents.minCoeff() > 0.0)) throw std::invalid_argument("box extents must be positive");
}

SceneSurface::SceneSurface(Cylinder c) {
  if (!(c.radius > 0.0) || !(c.half_height > 0.0)) {
    throw std::invalid_argument("cylinder radius and height must be positive");
  }
  if (c.axis.norm() == 0.0) throw std::invalid_argument("cylinder axis must be nonzero");
  c.axis.normalize();
  shape_ = c;
}

SceneSurface::SceneSurface(TriMesh mesh)
    : shape_(std::make_shared<const MeshSurface>(std::move(mesh))) {}

std::string SceneSurface::kind() const {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) return "sphere";
        else if constexpr (std::is_same_v<T, Box>) return "box";
        else if constexpr (std::is_same_v<T, Cylinder>) return "cylinder";
        else return "mesh";
      },
      shape_);
}

std::optional<double> SceneSurface::intersect(const Ray& ray, double t_min) const {
  return std::visit(
      [&](const auto& s) -> std::optional<double> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) return intersect_sphere(s, ray, t_min);
        else if constexpr (std::is_same_v<T, Box>) return intersect_box(s, ray, t_min);
        else if constexpr (std::is_same_v<T, Cylinder>) return intersect_cylinder(s, ray, t_min);
        else {
          auto hit = s->intersect(ray, t_min, kInf);
          return hit ? std::optional<double>(hit->t) : std::nullopt;
        }
      },
      shape_);
}

bool SceneSurface::contains(const Vec3& p) const {
  if (auto* m = std::get_if<std::shared_ptr<const MeshSurface>>(&shape_)) return (*m)->contains(p);
  return signed_distance(p) < 0.0;
}

double SceneSurface::signed_distance(const Vec3& p) const {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          return (p - s.center).norm() - s.radius;
        } else if constexpr (std::is_same_v<T, Box>) {
          const Vec3 q = (p - s.center).cwiseAbs() - s.half_extents;
          return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
        } else if constexpr (std::is_same_v<T, Cylinder>) {
          const Vec3 rel = p - s.center;
          const double axial = rel.dot(s.axis);
          const double radial = (rel - axial * s.axis).norm();
          const Vec2 d(radial - s.radius, std::abs(axial) - s.half_height);
          return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
        } else {
          const double d = s->distance(p);
          return s->contains(p) ? -d : d;
        }
      },
      shape_);
}

Eigen::AlignedBox3d SceneSurface::bounds() const {
  return std::visit(
      [](const auto& s) -> Eigen::AlignedBox3d {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          return {s.center - Vec3::Constant(s.radius), s.center + Vec3::Constant(s.radius)};
        } else if constexpr (std::is_same_v<T, Box>) {
          return {s.center - s.half_extents, s.center + s.half_extents};
        } else if constexpr (std::is_same_v<T, Cylinder>) {
          // Per-axis extent of a capped cylinder.
          Vec3 ext;
          for (int i = 0; i < 3; ++i) {
            const double ai = s.axis[i];
            ext[i] = s.half_height * std::abs(ai) + s.radius * std::sqrt(std::max(0.0, 1.0 - ai * ai));
          }
          return {s.center - ext, s.center + ext};
        } else {
          Eigen::AlignedBox3d box;
          for (const auto& v : s->mesh().vertices) box.extend(v);
          return box;
        }
      },
      shape_);
}

Vec3 SceneSurface::normal_at(const Vec3& p) const {
  return std::visit(
      [&](const auto& s) -> Vec3 {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          return (p - s.center).normalized();
        } else if constexpr (std::is_same_v<T, Box>) {
          const Vec3 q = (p - s.center).cwiseQuotient(s.half_extents);
          Eigen::Index axis = 0;
          q.cwiseAbs().maxCoeff(&axis);
          Vec3 n = Vec3::Zero();
          n[axis] = q[axis] >= 0.0 ? 1.0 : -1.0;
          return n;
        } else if constexpr (std::is_same_v<T, Cylinder>) {
          const Vec3 rel = p - s.center;
          const double axial = rel.dot(s.axis);
          const Vec3 radial = rel - axial * s.axis;
          const double side_gap = std::abs(radial.norm() - s.radius);
          const double cap_gap = std::abs(std::abs(axial) - s.half_height);
          if (cap_gap < side_gap) return axial >= 0.0 ? Vec3(s.axis) : Vec3(-s.axis);
          return radial.normalized();
        } else {
          // Normal of the nearest face.
          const auto& mesh = s->mesh();
          double best = kInf;
          Vec3 n = Vec3::UnitZ();
          for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
            const auto& t = mesh.faces[f];
            const Vec3 q = closest_on_triangle(p, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
            const double d = (q - p).squaredNorm();
            if (d < best) {
              best = d;
              n = s->face_normals()[f];
            }
          }
          return n;
        }
      },
      shape_);
}

void SceneSurface::sample(std::size_t n, std::uint64_t seed, std::vector<Vec3>& points,
                          std::vector<Vec3>& normals) const {
  points.clear();
  normals.clear();
  if (auto* m = std::get_if<std::shared_ptr<const MeshSurface>>(&shape_)) {
    OrientedPointSet set = sample_mesh((*m)->mesh(), n, seed);
    points = std::move(set.points);
    normals = std::move(set.normals);
    return;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  points.reserve(n);
  normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Sphere>) {
            Vec3 d(gauss(rng), gauss(rng), gauss(rng));
            while (d.norm() < 1e-12) d = Vec3(gauss(rng), gauss(rng), gauss(rng));
            d.normalize();
            points.push_back(s.center + s.radius * d);
            normals.push_back(d);
          } else if constexpr (std::is_same_v<T, Box>) {
            const Vec3& h = s.half_extents;
            const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
            const double total = areas[0] + areas[1] + areas[2];
            double r = uni(rng) * total;
            int axis = 0;
            while (axis < 2 && r > areas[axis]) r -= areas[axis++];
            const double sign = uni(rng) < 0.5 ? -1.0 : 1.0;
            Vec3 p;
            for (int k = 0; k < 3; ++k) p[k] = (2.0 * uni(rng) - 1.0) * h[k];
            p[axis] = sign * h[axis];
            Vec3 nrm = Vec3::Zero();
            nrm[axis] = sign;
            points.push_back(s.center + p);
            normals.push_back(nrm);
          } else if constexpr (std::is_same_v<T, Cylinder>) {
            auto [u, v] = orthonormal_basis(s.axis);
            const double side = 2.0 * std::numbers::pi * s.radius * 2.0 * s.half_height;
            const double cap = std::numbers::pi * s.radius * s.radius;
            const double r = uni(rng) * (side + 2.0 * cap);
            const double phi = 2.0 * std::numbers::pi * uni(rng);
            const Vec3 radial = std::cos(phi) * u + std::sin(phi) * v;
            if (r < side) {
              const double z = (2.0 * uni(rng) - 1.0) * s.half_height;
              points.push_back(s.center + s.radius * radial + z * s.axis);
              normals.push_back(radial);
            } else {
              const double sign = r < side + cap ? 1.0 : -1.0;
              const double rho = s.radius * std::sqrt(uni(rng));
              points.push_back(s.center + rho * radial + sign * s.half_height * s.axis);
              normals.push_back(sign * s.axis);
            }
          }
        },
        shape_);
  }
}

}  // namespace evac3d
