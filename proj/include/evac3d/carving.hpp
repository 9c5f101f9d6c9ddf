#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "evac3d/events.hpp"
#include "evac3d/geometry.hpp"

namespace evac3d {

using VoxelIndex = std::array<int, 3>;

/// Axis-aligned voxel lattice: voxel (i, j, k) spans
/// origin + voxel_size * [i, i+1) x [j, j+1) x [k, k+1).
struct GridSpec {
  std::array<int, 3> dims = {128, 128, 128};
  Vec3 origin = Vec3::Zero();
  double voxel_size = 1.0;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  /// Row-major with z fastest: ((i * ny) + j) * nz + k.
  std::size_t linear(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k;
  }
  std::size_t linear(const VoxelIndex& v) const { return linear(v[0], v[1], v[2]); }
  Vec3 center(int i, int j, int k) const {
    return origin + voxel_size * Vec3(i + 0.5, j + 0.5, k + 0.5);
  }
  Vec3 center(const VoxelIndex& v) const { return center(v[0], v[1], v[2]); }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }

  void validate() const;
  friend bool operator==(const GridSpec&, const GridSpec&) = default;

  /// Cubic grid of `dim`^3 voxels centered on the box, with side
  /// `margin` times the box's largest extent.
  static GridSpec around(const Eigen::AlignedBox3d& box, int dim = 128, double margin = 1.2);
};

/// Dense integer accumulation volume plus the number of rays traced.
struct CarveVolume {
  GridSpec grid;
  std::vector<std::uint32_t> counts;
  std::uint64_t ops = 0;

  explicit CarveVolume(const GridSpec& g);

  std::uint32_t at(int i, int j, int k) const { return counts[grid.linear(i, j, k)]; }
  std::uint32_t max_count() const;

  /// Adds another volume over the same grid. Throws std::overflow_error when
  /// a count would exceed 2^32 - 1.
  void merge(const CarveVolume& other);

  friend bool operator==(const CarveVolume&, const CarveVolume&) = default;
};

struct OccupancyGrid {
  GridSpec grid;
  std::vector<std::uint8_t> occupied;

  explicit OccupancyGrid(const GridSpec& g) : grid(g), occupied(g.voxel_count(), 0) {}
  bool at(int i, int j, int k) const { return occupied[grid.linear(i, j, k)] != 0; }
  std::size_t count() const;
};

struct SurfacePointSet {
  std::vector<Vec3> points;
};

/// Voxels pierced by the ray (origin, direction in voxel units) between its
/// entry into [0, dims] and its exit, in traversal order. Consecutive voxels
/// differ by one step along exactly one axis; when the ray passes exactly
/// through an edge or corner the lower axis index steps first. Throws
/// std::domain_error for a zero direction.
std::vector<VoxelIndex> bresenham3d(const Vec3& origin, const Vec3& direction,
                                    const std::array<int, 3>& dims);

/// Traces one world-frame ray and increments every traversed voxel.
/// Increments `ops` even when the ray misses the grid.
void carve_event(CarveVolume& vol, const Ray& ray);

struct CarveStats {
  std::size_t carved = 0;
  std::size_t skipped_label = 0;
  std::size_t skipped_out_of_range = 0;  // outside trajectory time range
};

/// Carves each ace-labeled event (every event when use_labels is false).
/// `threads` > 1 partitions the stream over per-thread volumes merged by
/// integer addition, so the result is identical for any partitioning.
CarveStats carve_event_stream(CarveVolume& vol, const EventStream& stream, const Trajectory& traj,
                              const CameraIntrinsics& intr, bool use_labels, int threads = 1);

/// Binary silhouette image, row-major (y * width + x).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}
  bool at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { pixels[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
};

/// A silhouette observed from a known pose at time t.
struct MaskView {
  double t = 0.0;
  Pose pose;
  Mask mask;
};

/// Set pixels with at least one 4-neighbor unset or outside the image.
std::vector<std::array<int, 2>> mask_contour_pixels(const Mask& mask);

/// Frame-based baseline: traces one ray per silhouette contour pixel.
/// Returns the number of rays traced (also added to vol.ops).
std::size_t carve_mask(CarveVolume& vol, const Mask& mask, const Pose& pose,
                       const CameraIntrinsics& intr);

/// Classical visual hull: voxels whose center projects inside every mask.
/// Centers behind a camera or outside its image count as outside.
OccupancyGrid silhouette_occupancy(const GridSpec& grid, const std::vector<MaskView>& views,
                                   const CameraIntrinsics& intr);

/// Nearest-rank percentile (q in [0, 100]) of the nonzero counts; 0 when the
/// volume is empty.
std::uint32_t nonzero_count_percentile(const CarveVolume& vol, double q);

/// Centers of voxels with count > eps_v.
SurfacePointSet extract_high_confidence(const CarveVolume& vol, std::uint32_t eps_v);

struct OccupancyOptions {
  std::uint32_t eps_free = 0;
  /// Enclosed components smaller than this fraction of the largest one are
  /// treated as exterior pockets and dropped.
  double min_component_fraction = 0.05;
};

/// Voxels with count <= eps_free that are not reachable from the grid
/// boundary by a 6-connected walk through voxels with count <= eps_free.
/// Throws ReconstructionFailed when no such cavity exists.
OccupancyGrid extract_occupancy(const CarveVolume& vol, const OccupancyOptions& opts = {});

/// Number of 6-connected components of occupied voxels.
int occupancy_components(const OccupancyGrid& grid);

/// Binary volume file: magic "EVAC3D-VOL-v1\0\0\0", u32 dims[3], f64 origin[3],
/// f64 voxel_size, u64 ops, then u32 counts in GridSpec::linear order.
CarveVolume read_volume(const std::filesystem::path& path);
void write_volume(const CarveVolume& vol, const std::filesystem::path& path);

}  // namespace evac3d
