#pragma once

#include <vector>

#include "evac3d/carving.hpp"
#include "evac3d/kdtree.hpp"
#include "evac3d/mesh.hpp"

namespace evac3d {

/// Closed, outward-oriented surface of the occupied voxels: Marching Cubes on
/// the 0.5 level of the binary field sampled at voxel centers, with vertices
/// at cube-edge midpoints. The grid is zero-padded so the surface always
/// closes. Throws std::invalid_argument for an empty grid.
TriMesh marching_cubes(const OccupancyGrid& grid);

struct RefineConfig {
  double lambda1 = 1.0;    // data term weight
  double lambda2 = 0.1;    // edge-length regularizer weight
  double eps_d = 0.0;      // correspondence clamping radius (world units)
  int iters = 200;
  double step_size = 0.0;  // Adam learning rate (world units)
  int threads = 1;

  /// Throws ConfigError unless every field is positive (iters may be 0).
  void validate() const;

  /// eps_d = 3 voxels, step_size = 1e-3 scene diameters.
  static RefineConfig defaults_for(double voxel_size, double scene_diameter);
};

struct RefineLoss {
  double value = 0.0;
  double data = 0.0;        // weighted one-sided Chamfer part
  double regularizer = 0.0; // weighted edge-length part
  std::vector<Vec3> gradient;
};

/// Loss over the mesh vertices:
///   lambda1 / |V| * sum of squared distances to the nearest surface point,
///                   counting only vertices closer than eps_d,
/// + lambda2 / |V| * sum_i mean_{j in N(i)} |p_j - p_i|.
/// Nearest points are held fixed when differentiating; zero-length edges
/// contribute a zero subgradient. Throws std::invalid_argument on an empty
/// point set.
RefineLoss refine_loss(const TriMesh& mesh, const SurfacePointSet& surf, const RefineConfig& cfg);

/// Same, reusing a prebuilt index over surf points and the mesh adjacency.
RefineLoss refine_loss(const std::vector<Vec3>& vertices, const std::vector<std::vector<int>>& adjacency,
                       const KdTree& surf_index, const RefineConfig& cfg);

struct RefineResult {
  TriMesh mesh;
  std::vector<double> loss_trace;  // loss before each step, then the final loss
};

/// Adam on per-vertex translations for cfg.iters steps; faces are untouched.
/// Throws NumericalAbort when the loss or gradient becomes non-finite.
RefineResult refine_mesh(const TriMesh& mesh, const SurfacePointSet& surf, const RefineConfig& cfg);

}  // namespace evac3d
