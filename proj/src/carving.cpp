#include "evac3d/carving.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include "binary_io.hpp"
#include "evac3d/errors.hpp"

namespace evac3d {
namespace {

constexpr char kVolumeMagic[16] = {'E', 'V', 'A', 'C', '3', 'D', '-', 'V',
                                   'O', 'L', '-', 'v', '1', '\0', '\0', '\0'};
constexpr std::uint32_t kMaxCount = std::numeric_limits<std::uint32_t>::max();

void increment(std::uint32_t& c) {
  if (c == kMaxCount) throw std::overflow_error("carve volume count overflow");
  ++c;
}

}  // namespace

void GridSpec::validate() const {
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) {
    throw std::invalid_argument("grid dimensions must be positive");
  }
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
    throw std::invalid_argument("voxel size must be positive");
  }
  if (!origin.allFinite()) throw std::invalid_argument("grid origin must be finite");
}

GridSpec GridSpec::around(const Eigen::AlignedBox3d& box, int dim, double margin) {
  if (dim <= 0) throw std::invalid_argument("grid dimension must be positive");
  if (box.isEmpty()) throw std::invalid_argument("cannot size a grid around an empty box");
  const double side = margin * box.sizes().maxCoeff();
  GridSpec g;
  g.dims = {dim, dim, dim};
  g.voxel_size = side / dim;
  g.origin = box.center() - Vec3::Constant(side / 2.0);
  g.validate();
  return g;
}

CarveVolume::CarveVolume(const GridSpec& g) : grid(g) {
  grid.validate();
  counts.assign(grid.voxel_count(), 0);
}

std::uint32_t CarveVolume::max_count() const {
  return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
}

void CarveVolume::merge(const CarveVolume& other) {
  if (!(other.grid == grid)) throw std::invalid_argument("merge: grid mismatch");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const std::uint64_t sum = std::uint64_t{counts[i]} + other.counts[i];
    if (sum > kMaxCount) throw std::overflow_error("carve volume count overflow");
    counts[i] = static_cast<std::uint32_t>(sum);
  }
  ops += other.ops;
}

std::size_t OccupancyGrid::count() const {
  return static_cast<std::size_t>(std::count(occupied.begin(), occupied.end(), std::uint8_t{1}));
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](auto p) { return p != 0; }));
}

std::vector<VoxelIndex> bresenham3d(const Vec3& origin, const Vec3& direction,
                                    const std::array<int, 3>& dims) {
  if (direction.squaredNorm() == 0.0 || !direction.allFinite()) {
    throw std::domain_error("bresenham3d: zero direction");
  }
  std::vector<VoxelIndex> out;
  // Clip the half-line t >= 0 against [0, dims].
  double t_enter = 0.0, t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (direction[a] == 0.0) {
      if (origin[a] < 0.0 || origin[a] > dims[a]) return out;
      continue;
    }
    double t0 = (0.0 - origin[a]) / direction[a];
    double t1 = (dims[a] - origin[a]) / direction[a];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (!(t_exit > t_enter)) return out;

  const Vec3 entry = origin + t_enter * direction;
  VoxelIndex voxel;
  int step[3];
  double t_max[3];
  for (int a = 0; a < 3; ++a) {
    const double d = direction[a];
    // On a voxel boundary, start in the voxel the ray moves into.
    int v = d < 0.0 ? static_cast<int>(std::ceil(entry[a])) - 1 : static_cast<int>(std::floor(entry[a]));
    voxel[a] = std::clamp(v, 0, dims[a] - 1);
    step[a] = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
  }
  auto boundary_time = [&](int a) {
    if (step[a] == 0) return std::numeric_limits<double>::infinity();
    const double plane = step[a] > 0 ? voxel[a] + 1.0 : static_cast<double>(voxel[a]);
    return (plane - origin[a]) / direction[a];
  };
  for (int a = 0; a < 3; ++a) t_max[a] = boundary_time(a);

  out.reserve(static_cast<std::size_t>(dims[0] + dims[1] + dims[2]));
  while (true) {
    out.push_back(voxel);
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    if (t_max[axis] >= t_exit) break;
    voxel[axis] += step[axis];
    if (voxel[axis] < 0 || voxel[axis] >= dims[axis]) break;
    t_max[axis] = boundary_time(axis);
  }
  return out;
}

void carve_event(CarveVolume& vol, const Ray& ray) {
  ++vol.ops;
  const Vec3 o = (ray.origin - vol.grid.origin) / vol.grid.voxel_size;
  for (const auto& v : bresenham3d(o, ray.direction, vol.grid.dims)) {
    increment(vol.counts[vol.grid.linear(v)]);
  }
}

CarveStats carve_event_stream(CarveVolume& vol, const EventStream& stream, const Trajectory& traj,
                              const CameraIntrinsics& intr, bool use_labels, int threads) {
  auto work = [&](CarveVolume& target, std::size_t begin, std::size_t end) {
    CarveStats stats;
    for (std::size_t i = begin; i < end; ++i) {
      const Event& e = stream.events[i];
      if (use_labels && e.label != EventLabel::ace) {
        ++stats.skipped_label;
        continue;
      }
      if (!traj.covers(e.t)) {
        ++stats.skipped_out_of_range;
        continue;
      }
      carve_event(target, event_ray(e, traj, intr));
      ++stats.carved;
    }
    return stats;
  };

  const std::size_t n = stream.events.size();
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < workers) return work(vol, 0, n);

  std::vector<CarveVolume> partial(workers, CarveVolume(vol.grid));
  std::vector<CarveStats> stats(workers);
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          stats[w] = work(partial[w], n * w / workers, n * (w + 1) / workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  CarveStats total;
  for (std::size_t w = 0; w < workers; ++w) {
    vol.merge(partial[w]);
    total.carved += stats[w].carved;
    total.skipped_label += stats[w].skipped_label;
    total.skipped_out_of_range += stats[w].skipped_out_of_range;
  }
  return total;
}

std::vector<std::array<int, 2>> mask_contour_pixels(const Mask& mask) {
  std::vector<std::array<int, 2>> out;
  auto unset = [&](int x, int y) {
    return x < 0 || y < 0 || x >= mask.width || y >= mask.height || !mask.at(x, y);
  };
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      if (unset(x - 1, y) || unset(x + 1, y) || unset(x, y - 1) || unset(x, y + 1)) out.push_back({x, y});
    }
  }
  return out;
}

std::size_t carve_mask(CarveVolume& vol, const Mask& mask, const Pose& pose,
                       const CameraIntrinsics& intr) {
  if (mask.width != intr.width || mask.height != intr.height) {
    throw std::invalid_argument("carve_mask: mask size does not match intrinsics");
  }
  const auto contour = mask_contour_pixels(mask);
  for (const auto& px : contour) carve_event(vol, pixel_ray(Vec2(px[0], px[1]), pose, intr));
  return contour.size();
}

OccupancyGrid silhouette_occupancy(const GridSpec& grid, const std::vector<MaskView>& views,
                                   const CameraIntrinsics& intr) {
  OccupancyGrid out(grid);
  for (const auto& view : views) {
    if (view.mask.width != intr.width || view.mask.height != intr.height) {
      throw std::invalid_argument("silhouette_occupancy: mask size does not match intrinsics");
    }
  }
  for (int i = 0; i < grid.dims[0]; ++i) {
    for (int j = 0; j < grid.dims[1]; ++j) {
      for (int k = 0; k < grid.dims[2]; ++k) {
        const Vec3 x = grid.center(i, j, k);
        bool inside = !views.empty();
        for (const auto& view : views) {
          const Vec3 c = view.pose.to_camera(x);
          if (c.z() <= 0.0) {
            inside = false;
            break;
          }
          const Vec2 px = project(c, intr);
          const double u = std::round(px.x()), v = std::round(px.y());
          if (!(u >= 0.0 && v >= 0.0 && u < intr.width && v < intr.height) ||
              !view.mask.at(static_cast<int>(u), static_cast<int>(v))) {
            inside = false;
            break;
          }
        }
        if (inside) out.occupied[grid.linear(i, j, k)] = 1;
      }
    }
  }
  return out;
}

std::uint32_t nonzero_count_percentile(const CarveVolume& vol, double q) {
  if (q < 0.0 || q > 100.0) throw std::invalid_argument("percentile must lie in [0, 100]");
  std::vector<std::uint32_t> nz;
  for (auto c : vol.counts) {
    if (c > 0) nz.push_back(c);
  }
  if (nz.empty()) return 0;
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * nz.size()));
  const std::size_t idx = rank == 0 ? 0 : rank - 1;
  std::nth_element(nz.begin(), nz.begin() + idx, nz.end());
  return nz[idx];
}

SurfacePointSet extract_high_confidence(const CarveVolume& vol, std::uint32_t eps_v) {
  SurfacePointSet out;
  const auto& g = vol.grid;
  for (int i = 0; i < g.dims[0]; ++i) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int k = 0; k < g.dims[2]; ++k) {
        if (vol.at(i, j, k) > eps_v) out.points.push_back(g.center(i, j, k));
      }
    }
  }
  return out;
}

namespace {

constexpr int kNeighbors6[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};

/// Labels 6-connected components of voxels where `inside` is set; returns
/// per-voxel labels (-1 outside) and component sizes.
std::vector<std::size_t> label_components(const GridSpec& g, const std::vector<std::uint8_t>& inside,
                                          std::vector<int>& labels) {
  labels.assign(g.voxel_count(), -1);
  std::vector<std::size_t> sizes;
  std::vector<VoxelIndex> queue;
  for (int i = 0; i < g.dims[0]; ++i) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int k = 0; k < g.dims[2]; ++k) {
        const std::size_t start = g.linear(i, j, k);
        if (!inside[start] || labels[start] >= 0) continue;
        const int label = static_cast<int>(sizes.size());
        std::size_t size = 0;
        labels[start] = label;
        queue.assign(1, {i, j, k});
        while (!queue.empty()) {
          const VoxelIndex v = queue.back();
          queue.pop_back();
          ++size;
          for (const auto& d : kNeighbors6) {
            const int a = v[0] + d[0], b = v[1] + d[1], c = v[2] + d[2];
            if (!g.contains(a, b, c)) continue;
            const std::size_t n = g.linear(a, b, c);
            if (inside[n] && labels[n] < 0) {
              labels[n] = label;
              queue.push_back({a, b, c});
            }
          }
        }
        sizes.push_back(size);
      }
    }
  }
  return sizes;
}

}  // namespace

OccupancyGrid extract_occupancy(const CarveVolume& vol, const OccupancyOptions& opts) {
  const GridSpec& g = vol.grid;
  std::vector<std::uint8_t> free(g.voxel_count());
  for (std::size_t i = 0; i < free.size(); ++i) free[i] = vol.counts[i] <= opts.eps_free ? 1 : 0;

  // Flood the exterior from every free boundary voxel.
  std::vector<std::uint8_t> exterior(g.voxel_count(), 0);
  std::vector<VoxelIndex> queue;
  auto seed = [&](int i, int j, int k) {
    const std::size_t n = g.linear(i, j, k);
    if (free[n] && !exterior[n]) {
      exterior[n] = 1;
      queue.push_back({i, j, k});
    }
  };
  for (int i = 0; i < g.dims[0]; ++i) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int k = 0; k < g.dims[2]; ++k) {
        if (i == 0 || j == 0 || k == 0 || i == g.dims[0] - 1 || j == g.dims[1] - 1 || k == g.dims[2] - 1) {
          seed(i, j, k);
        }
      }
    }
  }
  while (!queue.empty()) {
    const VoxelIndex v = queue.back();
    queue.pop_back();
    for (const auto& d : kNeighbors6) {
      const int a = v[0] + d[0], b = v[1] + d[1], c = v[2] + d[2];
      if (g.contains(a, b, c)) seed(a, b, c);
    }
  }

  std::vector<std::uint8_t> cavity(g.voxel_count());
  for (std::size_t i = 0; i < cavity.size(); ++i) cavity[i] = free[i] && !exterior[i] ? 1 : 0;
  std::vector<int> labels;
  const auto sizes = label_components(g, cavity, labels);
  if (sizes.empty()) {
    throw ReconstructionFailed("no enclosed cavity in the carved volume; viewpoint coverage is insufficient");
  }
  const std::size_t largest = *std::max_element(sizes.begin(), sizes.end());
  const double keep_min = opts.min_component_fraction * static_cast<double>(largest);

  OccupancyGrid out(g);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0 && static_cast<double>(sizes[labels[i]]) >= keep_min) out.occupied[i] = 1;
  }
  return out;
}

int occupancy_components(const OccupancyGrid& grid) {
  std::vector<int> labels;
  return static_cast<int>(label_components(grid.grid, grid.occupied, labels).size());
}

CarveVolume read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open volume file " + path.string());
  char magic[16];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kVolumeMagic, sizeof(magic)) != 0) {
    throw ParseError("bad magic in volume file", 0);
  }
  GridSpec g;
  std::uint32_t dims[3];
  double origin[3];
  std::uint64_t ops = 0;
  bool ok = detail::read_le(in, dims[0]) && detail::read_le(in, dims[1]) && detail::read_le(in, dims[2]) &&
            detail::read_le(in, origin[0]) && detail::read_le(in, origin[1]) &&
            detail::read_le(in, origin[2]) && detail::read_le(in, g.voxel_size) && detail::read_le(in, ops);
  if (!ok) throw ParseError("truncated volume header", 0);
  for (int a = 0; a < 3; ++a) {
    if (dims[a] == 0 || dims[a] > 4096) throw ParseError("unreasonable volume dimensions", 0);
    g.dims[a] = static_cast<int>(dims[a]);
  }
  g.origin = Vec3(origin[0], origin[1], origin[2]);
  CarveVolume vol(g);
  vol.ops = ops;
  for (auto& c : vol.counts) {
    if (!detail::read_le(in, c)) throw ParseError("truncated volume counts", 0);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes in volume file", 0);
  return vol;
}

void write_volume(const CarveVolume& vol, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write volume file " + path.string());
  out.write(kVolumeMagic, sizeof(kVolumeMagic));
  for (int a = 0; a < 3; ++a) detail::write_le(out, static_cast<std::uint32_t>(vol.grid.dims[a]));
  for (int a = 0; a < 3; ++a) detail::write_le(out, vol.grid.origin[a]);
  detail::write_le(out, vol.grid.voxel_size);
  detail::write_le(out, vol.ops);
  for (auto c : vol.counts) detail::write_le(out, c);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace evac3d
