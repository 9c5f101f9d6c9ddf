#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "evac3d/geometry.hpp"

namespace evac3d {

/// Indexed triangle mesh. Vertex adjacency is derived from the faces.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  /// Throws ValidationError for out-of-range indices or repeated corners.
  void validate() const;

  Vec3 face_normal(std::size_t f) const;  // unit; zero for degenerate faces
  double face_area(std::size_t f) const;
  double area() const;
  /// Divergence-theorem volume; positive for outward-oriented closed meshes.
  double signed_volume() const;

  /// Sorted, duplicate-free neighbor lists; symmetric by construction.
  std::vector<std::vector<int>> adjacency() const;
};

/// Every undirected edge is shared by exactly two faces.
bool is_watertight(const TriMesh& mesh);

/// Number of face-connected components (faces sharing a vertex are connected).
int connected_components(const TriMesh& mesh);

/// Drops faces with (near-)zero area and vertices no face references.
TriMesh remove_degenerate_faces(const TriMesh& mesh, double min_area = 0.0);

/// Subdivided icosahedron with vertices on the sphere.
TriMesh make_icosphere(int subdivisions, double radius = 1.0, const Vec3& center = Vec3::Zero());

/// Largest distance between the sphere and the inscribed icosphere faces,
/// i.e. radius minus the smallest face-plane distance from the center.
double icosphere_chordal_error(const TriMesh& icosphere, double radius, const Vec3& center);

/// PLY (binary little-endian) or OBJ (text), chosen by extension.
TriMesh read_mesh(const std::filesystem::path& path);
void write_mesh(const TriMesh& mesh, const std::filesystem::path& path);

}  // namespace evac3d
