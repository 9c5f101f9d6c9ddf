#pragma once

#include <cstdint>
#include <vector>

#include "evac3d/geometry.hpp"
#include "evac3d/mesh.hpp"

namespace evac3d {

/// Points with unit normals (parallel arrays).
struct OrientedPointSet {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

inline constexpr std::size_t kDefaultEvalSamples = 10000;
inline constexpr std::size_t kDefaultNormalNeighbors = 300;

/// Area-uniform samples carrying face normals. Throws std::invalid_argument
/// when the mesh has no face of positive area (and n > 0).
OrientedPointSet sample_mesh(const TriMesh& mesh, std::size_t n, std::uint64_t seed);

struct NormalEstimate {
  OrientedPointSet set;
  /// Points whose neighborhood covariance had no unique smallest direction
  /// (coincident or collinear neighbors). Their normal is arbitrary.
  std::vector<bool> degenerate;
  std::size_t degenerate_count = 0;
};

/// PCA normals from the k nearest neighbors (query point included). Signs are
/// arbitrary; consumers compare with |cos|. Throws std::invalid_argument when
/// there are not more than k points.
NormalEstimate estimate_normals(const std::vector<Vec3>& points, std::size_t k);

/// Symmetric Chamfer distance: mean unsquared nearest-neighbor distance
/// a->b plus b->a, in the input units.
double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

/// Mean over gt of |n_i . m_j| with j the nearest pred point to gt point i.
double normal_consistency(const OrientedPointSet& gt, const OrientedPointSet& pred);

}  // namespace evac3d
