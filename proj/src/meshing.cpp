#include "evac3d/meshing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>

#include "evac3d/errors.hpp"
#include "evac3d/kdtree.hpp"

namespace evac3d {
namespace {

constexpr int kFirstCentroid = 12;

// Cube corner c sits at (c & 1, (c >> 1) & 1, (c >> 2) & 1). Edge e joins
// edges[e][0] to edges[e][1] along axis edge_axis[e].
struct CubeTopology {
  std::array<std::array<int, 2>, 12> edges{};
  std::array<int, 12> edge_axis{};
  // Triangle corners are cube edges (0-11) or kFirstCentroid + loop index.
  std::array<std::vector<std::array<int, 3>>, 256> triangles;
  std::array<std::vector<std::vector<int>>, 256> loops;

  int edge_index(int c0, int c1) const {
    for (int e = 0; e < 12; ++e) {
      if ((edges[e][0] == c0 && edges[e][1] == c1) || (edges[e][0] == c1 && edges[e][1] == c0)) return e;
    }
    throw std::logic_error("not a cube edge");
  }
};

Vec3 corner_position(int c) { return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1); }

CubeTopology build_topology() {
  CubeTopology t;
  int e = 0;
  for (int axis = 0; axis < 3; ++axis) {
    for (int c = 0; c < 8; ++c) {
      if (c & (1 << axis)) continue;
      t.edges[e] = {c, c | (1 << axis)};
      t.edge_axis[e] = axis;
      ++e;
    }
  }
  auto midpoint = [&](int edge) -> Vec3 {
    return 0.5 * (corner_position(t.edges[edge][0]) + corner_position(t.edges[edge][1]));
  };

  for (int config = 0; config < 256; ++config) {
    auto occupied = [&](int c) { return ((config >> c) & 1) != 0; };
    // Directed iso-segments on the six faces; next[edge] follows the loop.
    std::array<int, 12> next;
    next.fill(-1);
    for (int axis = 0; axis < 3; ++axis) {
      const int b = (axis + 1) % 3, c = (axis + 2) % 3;
      for (int side = 0; side < 2; ++side) {
        const Vec3 outward = (side == 0 ? -1.0 : 1.0) * Vec3::Unit(axis);
        std::array<int, 4> ring;
        const int bits[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
        for (int k = 0; k < 4; ++k) {
          ring[k] = (side << axis) | (bits[k][0] << b) | (bits[k][1] << c);
        }
        std::vector<int> crossing;  // ring edge k joins ring[k] and ring[k + 1]
        for (int k = 0; k < 4; ++k) {
          if (occupied(ring[k]) != occupied(ring[(k + 1) % 4])) crossing.push_back(k);
        }
        std::vector<std::array<int, 2>> segments;
        if (crossing.size() == 2) {
          segments.push_back({crossing[0], crossing[1]});
        } else if (crossing.size() == 4) {
          // Ambiguous face: cut off each occupied corner separately.
          for (int k = 0; k < 4; ++k) {
            if (occupied(ring[k])) segments.push_back({(k + 3) % 4, k});
          }
        }
        for (const auto& seg : segments) {
          int ea = t.edge_index(ring[seg[0]], ring[(seg[0] + 1) % 4]);
          int eb = t.edge_index(ring[seg[1]], ring[(seg[1] + 1) % 4]);
          Vec3 toward_empty = Vec3::Zero();
          for (int edge : {ea, eb}) {
            const int c0 = t.edges[edge][0], c1 = t.edges[edge][1];
            const Vec3 d = corner_position(c1) - corner_position(c0);
            toward_empty += occupied(c0) ? d : -d;
          }
          if ((midpoint(eb) - midpoint(ea)).dot(toward_empty.cross(outward)) < 0.0) std::swap(ea, eb);
          next[ea] = eb;
        }
      }
    }

    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[start] < 0 || used[start]) continue;
      std::vector<int> loop;
      for (int edge = start; !used[edge]; edge = next[edge]) {
        used[edge] = true;
        loop.push_back(edge);
      }
      // Fan from the first apex whose triangles are non-degenerate and whose
      // diagonals avoid the cube faces (a neighbor cube may reuse those
      // points); otherwise fan around a vertex at the loop centroid.
      const int n = static_cast<int>(loop.size());
      auto same_face = [&](int p, int q) {
        const Vec3 a = midpoint(p), b = midpoint(q);
        for (int axis = 0; axis < 3; ++axis) {
          if (a[axis] == b[axis] && a[axis] != 0.5) return true;
        }
        return false;
      };
      bool done = false;
      for (int apex = 0; apex < n && !done; ++apex) {
        std::vector<std::array<int, 3>> fan;
        bool ok = true;
        for (int k = 1; k + 1 < n; ++k) {
          const int a = loop[apex], p = loop[(apex + k) % n], q = loop[(apex + k + 1) % n];
          if ((midpoint(p) - midpoint(a)).cross(midpoint(q) - midpoint(a)).norm() < 1e-9) ok = false;
          if (k > 1 && same_face(a, p)) ok = false;
          fan.push_back({a, p, q});
        }
        if (ok) {
          t.triangles[config].insert(t.triangles[config].end(), fan.begin(), fan.end());
          done = true;
        }
      }
      if (!done) {
        const int center = kFirstCentroid + static_cast<int>(t.loops[config].size());
        for (int k = 0; k < n; ++k) t.triangles[config].push_back({center, loop[k], loop[(k + 1) % n]});
      }
      t.loops[config].push_back(loop);
    }
  }
  return t;
}

const CubeTopology& topology() {
  static const CubeTopology t = build_topology();
  return t;
}

}  // namespace

TriMesh marching_cubes(const OccupancyGrid& grid) {
  if (grid.count() == 0) throw std::invalid_argument("marching_cubes: no occupied voxel");
  const auto& topo = topology();
  const GridSpec& g = grid.grid;
  const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  auto value = [&](int i, int j, int k) { return g.contains(i, j, k) && grid.at(i, j, k); };

  TriMesh mesh;
  std::unordered_map<std::uint64_t, int> vertex_of_edge;
  // Padded corner coordinates run over [-1, n]; shift by one for keys.
  const std::uint64_t py = ny + 2, pz = nz + 2;
  auto vertex = [&](int i, int j, int k, int e) {
    const int c0 = topo.edges[e][0];
    const int ci = i + (c0 & 1), cj = j + ((c0 >> 1) & 1), ck = k + ((c0 >> 2) & 1);
    const std::uint64_t key =
        ((static_cast<std::uint64_t>(ci + 1) * py + (cj + 1)) * pz + (ck + 1)) * 3 + topo.edge_axis[e];
    auto [it, inserted] = vertex_of_edge.try_emplace(key, static_cast<int>(mesh.vertices.size()));
    if (inserted) {
      Vec3 p = g.center(ci, cj, ck);
      p[topo.edge_axis[e]] += 0.5 * g.voxel_size;
      mesh.vertices.push_back(p);
    }
    return it->second;
  };

  for (int i = -1; i < nx; ++i) {
    for (int j = -1; j < ny; ++j) {
      for (int k = -1; k < nz; ++k) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          if (value(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))) config |= 1 << c;
        }
        const auto& tris = topo.triangles[config];
        if (tris.empty()) continue;
        const auto& loops = topo.loops[config];
        std::array<int, 12> edge_vertex;
        for (const auto& loop : loops) {
          for (int e : loop) edge_vertex[e] = vertex(i, j, k, e);
        }
        std::vector<int> centroid(loops.size(), -1);
        auto resolve = [&](int c) {
          if (c < kFirstCentroid) return edge_vertex[c];
          const std::size_t l = static_cast<std::size_t>(c - kFirstCentroid);
          if (centroid[l] < 0) {
            Vec3 p = Vec3::Zero();
            for (int e : loops[l]) p += mesh.vertices[edge_vertex[e]];
            centroid[l] = static_cast<int>(mesh.vertices.size());
            mesh.vertices.push_back(p / static_cast<double>(loops[l].size()));
          }
          return centroid[l];
        };
        for (const auto& tri : tris) mesh.faces.push_back({resolve(tri[0]), resolve(tri[1]), resolve(tri[2])});
      }
    }
  }
  return mesh;
}

void RefineConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(lambda1, "lambda1");
  positive(lambda2, "lambda2");
  positive(eps_d, "eps_d");
  positive(step_size, "step_size");
  if (iters < 0) throw ConfigError("iters must be non-negative");
  if (threads < 1) throw ConfigError("threads must be at least 1");
}

RefineConfig RefineConfig::defaults_for(double voxel_size, double scene_diameter) {
  RefineConfig cfg;
  cfg.eps_d = 3.0 * voxel_size;
  cfg.step_size = 1e-3 * scene_diameter;
  return cfg;
}

RefineLoss refine_loss(const std::vector<Vec3>& vertices, const std::vector<std::vector<int>>& adjacency,
                       const KdTree& surf_index, const RefineConfig& cfg) {
  if (surf_index.empty()) throw std::invalid_argument("refine_loss: empty surface point set");
  const std::size_t n = vertices.size();
  RefineLoss out;
  out.gradient.assign(n, Vec3::Zero());
  if (n == 0) return out;
  const double scale = 1.0 / static_cast<double>(n);
  const double eps2 = cfg.eps_d * cfg.eps_d;

  // Per-vertex data terms are independent; sum them afterwards in index order.
  std::vector<double> data(n, 0.0);
  auto data_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto nb = surf_index.nearest(vertices[i]);
      if (nb.dist2 < eps2) {
        data[i] = nb.dist2;
        out.gradient[i] = 2.0 * cfg.lambda1 * scale * (vertices[i] - surf_index.point(nb.index));
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, cfg.threads));
  if (workers == 1 || n < 4 * workers) {
    data_range(0, n);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back(data_range, n * w / workers, n * (w + 1) / workers);
    }
  }
  for (double d : data) out.data += d;
  out.data *= cfg.lambda1 * scale;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& nbrs = adjacency[i];
    if (nbrs.empty()) continue;
    const double w = cfg.lambda2 * scale / static_cast<double>(nbrs.size());
    double sum = 0.0;
    for (int j : nbrs) {
      const Vec3 d = vertices[j] - vertices[i];
      const double len = d.norm();
      sum += len;
      if (len > 0.0) {
        const Vec3 u = d / len;
        out.gradient[i] -= w * u;
        out.gradient[j] += w * u;
      }
    }
    out.regularizer += w * sum;
  }
  out.value = out.data + out.regularizer;
  return out;
}

RefineLoss refine_loss(const TriMesh& mesh, const SurfacePointSet& surf, const RefineConfig& cfg) {
  if (surf.points.empty()) throw std::invalid_argument("refine_loss: empty surface point set");
  const KdTree index(surf.points);
  return refine_loss(mesh.vertices, mesh.adjacency(), index, cfg);
}

RefineResult refine_mesh(const TriMesh& mesh, const SurfacePointSet& surf, const RefineConfig& cfg) {
  cfg.validate();
  if (surf.points.empty()) throw std::invalid_argument("refine_mesh: empty surface point set");
  RefineResult result{mesh, {}};
  if (cfg.iters == 0) return result;

  const KdTree index(surf.points);
  const auto adjacency = mesh.adjacency();
  auto& x = result.mesh.vertices;
  std::vector<Vec3> m(x.size(), Vec3::Zero()), v(x.size(), Vec3::Zero());
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  auto evaluate = [&](int step) {
    RefineLoss loss = refine_loss(x, adjacency, index, cfg);
    bool finite = std::isfinite(loss.value);
    for (const auto& g : loss.gradient) finite = finite && g.allFinite();
    if (!finite) {
      throw NumericalAbort("refinement produced a non-finite loss at step " + std::to_string(step));
    }
    result.loss_trace.push_back(loss.value);
    return loss;
  };

  double b1t = 1.0, b2t = 1.0;
  for (int step = 0; step < cfg.iters; ++step) {
    const RefineLoss loss = evaluate(step);
    b1t *= beta1;
    b2t *= beta2;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Vec3& g = loss.gradient[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
      const Vec3 m_hat = m[i] / (1.0 - b1t);
      const Vec3 v_hat = v[i] / (1.0 - b2t);
      x[i] -= cfg.step_size * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + eps).matrix());
    }
  }
  evaluate(cfg.iters);
  return result;
}

}  // namespace evac3d
