#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "evac3d/geometry.hpp"
#include "evac3d/mesh.hpp"

namespace evac3d {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

/// Axis-aligned box.
struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
};

/// Finite closed cylinder (side plus two caps) around `axis` through `center`.
struct Cylinder {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  double half_height = 1.0;
  Vec3 axis = Vec3::UnitZ();
};

struct RayHit {
  double t = 0.0;
  int face = -1;
};

/// Closed triangle mesh with a bounding volume hierarchy for ray casts.
class MeshSurface {
 public:
  /// Throws ValidationError unless the mesh is watertight.
  explicit MeshSurface(TriMesh mesh);

  const TriMesh& mesh() const noexcept { return mesh_; }
  const std::vector<Vec3>& face_normals() const noexcept { return normals_; }

  struct Edge {
    int a, b;        // vertex indices
    int f0, f1;      // adjacent faces
  };
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  /// Nearest hit with t in (t_min, t_max), skipping faces in `ignore`.
  std::optional<RayHit> intersect(const Ray& ray, double t_min, double t_max,
                                  const std::vector<int>& ignore = {}) const;
  bool contains(const Vec3& p) const;
  double distance(const Vec3& p) const;

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1;  // children, or -1 for leaves
    int begin = 0, end = 0;     // range into order_ for leaves
  };
  int build(int begin, int end);

  TriMesh mesh_;
  std::vector<Vec3> normals_;
  std::vector<Edge> edges_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Known object surface: an analytic primitive or a closed mesh. Immutable
/// and cheap to copy.
class SceneSurface {
 public:
  using Shape = std::variant<Sphere, Box, Cylinder, std::shared_ptr<const MeshSurface>>;

  /// Throws std::invalid_argument for non-positive radii or extents.
  SceneSurface(Sphere s);
  SceneSurface(Box b);
  SceneSurface(Cylinder c);
  SceneSurface(TriMesh mesh);

  const Shape& shape() const noexcept { return shape_; }
  std::string kind() const;

  /// Smallest t > t_min at which the ray crosses the surface.
  std::optional<double> intersect(const Ray& ray, double t_min = 0.0) const;
  bool contains(const Vec3& p) const;
  /// Negative inside. Exact for primitives; unsigned distance plus parity
  /// sign for meshes.
  double signed_distance(const Vec3& p) const;
  Eigen::AlignedBox3d bounds() const;
  double diameter() const { return bounds().diagonal().norm(); }

  /// Surface normal at a point on a primitive's smooth part.
  Vec3 normal_at(const Vec3& p) const;

  /// Uniform area samples with outward normals, for ground-truth metrics.
  void sample(std::size_t n, std::uint64_t seed, std::vector<Vec3>& points,
              std::vector<Vec3>& normals) const;

 private:
  Shape shape_;
};

}  // namespace evac3d
