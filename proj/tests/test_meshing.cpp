#include <doctest.h>

#include <cmath>
#include <random>

#include "evac3d/errors.hpp"
#include "evac3d/meshing.hpp"
#include "evac3d/metrics.hpp"
#include "evac3d/surface.hpp"
#include "test_util.hpp"

using namespace evac3d;

namespace {

OccupancyGrid grid_with(std::array<int, 3> dims, double voxel = 1.0) {
  return OccupancyGrid(GridSpec{dims, Vec3::Zero(), voxel});
}

void set(OccupancyGrid& g, int i, int j, int k) { g.occupied[g.grid.linear(i, j, k)] = 1; }

bool no_degenerate_faces(const TriMesh& m) {
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    if (!(m.face_area(f) > 0.0)) return false;
  }
  return true;
}

/// Perturbed icosphere plus scattered surface points near it.
void random_problem(std::uint64_t seed, TriMesh& mesh, SurfacePointSet& surf) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.05);
  mesh = make_icosphere(1);  // 42 vertices
  for (auto& v : mesh.vertices) v += Vec3(n(rng), n(rng), n(rng));
  surf.points.clear();
  for (int i = 0; i < 60; ++i) surf.points.push_back(1.02 * evac3d::testing::random_unit(rng));
}

double loss_at(const std::vector<Vec3>& v, const std::vector<std::vector<int>>& adj, const KdTree& tree,
               const RefineConfig& cfg) {
  return refine_loss(v, adj, tree, cfg).value;
}

}  // namespace

TEST_SUITE("meshing") {

TEST_CASE("single voxel gives a small closed octahedron") {
  OccupancyGrid g = grid_with({3, 3, 3}, 0.5);
  set(g, 1, 1, 1);
  const TriMesh m = marching_cubes(g);
  CHECK(is_watertight(m));
  CHECK(m.faces.size() == 8);
  CHECK(m.signed_volume() == doctest::Approx(std::pow(0.5, 3) / 6.0));
  CHECK(connected_components(m) == 1);
}

TEST_CASE("empty grid is an error") {
  CHECK_THROWS_AS(marching_cubes(grid_with({4, 4, 4})), std::invalid_argument);
}

TEST_CASE("every 2x2x2 configuration closes") {
  for (int mask = 1; mask < 256; ++mask) {
    OccupancyGrid g = grid_with({2, 2, 2});
    for (int c = 0; c < 8; ++c) {
      if (mask >> c & 1) set(g, c & 1, c >> 1 & 1, c >> 2 & 1);
    }
    const TriMesh m = marching_cubes(g);
    CAPTURE(mask);
    CHECK(is_watertight(m));
    CHECK(m.signed_volume() > 0.0);
    CHECK(no_degenerate_faces(m));
  }
}

TEST_CASE("random grids close with outward orientation") {
  std::mt19937_64 rng(31);
  std::bernoulli_distribution occupied(0.45);
  for (int trial = 0; trial < 20; ++trial) {
    OccupancyGrid g = grid_with({7, 6, 5}, 0.1);
    for (auto& v : g.occupied) v = occupied(rng);
    if (g.count() == 0) continue;
    const TriMesh m = marching_cubes(g);
    CHECK(is_watertight(m));
    CHECK(m.signed_volume() > 0.0);
    CHECK(no_degenerate_faces(m));
    for (const auto& nb : m.adjacency()) CHECK(!nb.empty());
  }
}

TEST_CASE("voxelized unit sphere volume") {
  const SceneSurface sphere(Sphere{Vec3::Zero(), 1.0});
  const GridSpec grid = GridSpec::around(sphere.bounds(), 128, 1.2);
  OccupancyGrid g(grid);
  for (int i = 0; i < 128; ++i)
    for (int j = 0; j < 128; ++j)
      for (int k = 0; k < 128; ++k) g.occupied[grid.linear(i, j, k)] = sphere.contains(grid.center(i, j, k));
  const TriMesh m = marching_cubes(g);
  CHECK(is_watertight(m));
  CHECK(std::abs(m.signed_volume() - 4.0 / 3.0 * M_PI) < 0.03 * 4.0 / 3.0 * M_PI);
  CHECK(connected_components(m) == 1);
}

TEST_CASE("two separated blobs give two components") {
  OccupancyGrid g = grid_with({10, 4, 4});
  for (int i : {1, 2})
    for (int j : {1, 2}) set(g, i, j, 1);
  for (int i : {6, 7, 8}) set(g, i, 2, 2);
  CHECK(connected_components(marching_cubes(g)) == 2);
}

TEST_CASE("loss vanishes on a collapsed mesh sitting on its points") {
  TriMesh m;
  m.vertices = {Vec3(0.2, 0.2, 0.2), Vec3(0.2, 0.2, 0.2), Vec3(0.2, 0.2, 0.2)};
  m.faces = {{0, 1, 2}};
  SurfacePointSet surf{{Vec3(0.2, 0.2, 0.2)}};
  RefineConfig cfg;
  cfg.eps_d = 1.0;
  cfg.step_size = 0.01;
  const RefineLoss l = refine_loss(m, surf, cfg);
  CHECK(l.value == 0.0);
  for (const auto& g : l.gradient) CHECK(g.norm() == 0.0);
}

TEST_CASE("single vertex near a lone point") {
  TriMesh m;
  m.vertices = {Vec3(0.3, -0.1, 0.2)};
  const Vec3 target(0.3, 0.1, 0.2);
  SurfacePointSet surf{{target}};
  RefineConfig cfg;
  cfg.lambda1 = 2.5;
  cfg.lambda2 = 1e-300;
  cfg.eps_d = 0.5;
  cfg.step_size = 0.01;
  const double d = 0.2;
  const RefineLoss l = refine_loss(m, surf, cfg);
  CHECK(l.value == doctest::Approx(cfg.lambda1 * d * d));
  CHECK(l.gradient[0].norm() == doctest::Approx(2.0 * cfg.lambda1 * d));
  CHECK(evac3d::testing::angle_between(-l.gradient[0], target - m.vertices[0]) < 1e-12);
}

TEST_CASE("vertices beyond the clamp radius get no data gradient") {
  TriMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(5, 0, 0)};
  SurfacePointSet surf{{Vec3(0.1, 0, 0)}};
  RefineConfig cfg;
  cfg.lambda2 = 1e-300;
  cfg.eps_d = 0.5;
  cfg.step_size = 0.01;
  const RefineLoss l = refine_loss(m, surf, cfg);
  CHECK(l.gradient[1].norm() == 0.0);
  CHECK(l.gradient[0].norm() > 0.0);
  CHECK(l.data == doctest::Approx(0.01 / 2.0));

  cfg.eps_d = 0.1;  // exactly at the radius: excluded
  CHECK(refine_loss(m, surf, cfg).data == 0.0);
}

TEST_CASE("analytic gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TriMesh mesh;
    SurfacePointSet surf;
    random_problem(seed, mesh, surf);
    RefineConfig cfg;
    cfg.lambda1 = 1.0;
    cfg.lambda2 = 0.3;
    cfg.eps_d = 0.4;
    cfg.step_size = 0.01;
    const KdTree tree(surf.points);
    const auto adj = mesh.adjacency();
    const RefineLoss l = refine_loss(mesh.vertices, adj, tree, cfg);
    double num = 0.0, den = 0.0;
    const double h = 1e-6;
    std::vector<Vec3> v = mesh.vertices;
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        const double keep = v[i][a];
        v[i][a] = keep + h;
        const double up = loss_at(v, adj, tree, cfg);
        v[i][a] = keep - h;
        const double down = loss_at(v, adj, tree, cfg);
        v[i][a] = keep;
        const double fd = (up - down) / (2.0 * h);
        num += (fd - l.gradient[i][a]) * (fd - l.gradient[i][a]);
        den += fd * fd;
      }
    }
    CAPTURE(seed);
    CHECK(std::sqrt(num / den) < 1e-5);
  }
}

TEST_CASE("regularizer is translation invariant") {
  TriMesh mesh;
  SurfacePointSet surf;
  random_problem(3, mesh, surf);
  RefineConfig cfg;
  cfg.eps_d = 0.4;
  cfg.step_size = 0.01;
  const double before = refine_loss(mesh, surf, cfg).regularizer;
  for (auto& v : mesh.vertices) v += Vec3(0.7, -1.1, 2.3);
  CHECK(refine_loss(mesh, surf, cfg).regularizer == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("config validation") {
  RefineConfig cfg = RefineConfig::defaults_for(0.02, 2.0);
  CHECK(cfg.eps_d == doctest::Approx(0.06));
  CHECK(cfg.step_size == doctest::Approx(0.002));
  CHECK_NOTHROW(cfg.validate());
  RefineConfig bad = cfg;
  bad.lambda2 = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.iters = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.eps_d = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS(refine_loss(make_icosphere(0), SurfacePointSet{}, cfg));
}

TEST_CASE("zero iterations keep the mesh") {
  TriMesh mesh;
  SurfacePointSet surf;
  random_problem(1, mesh, surf);
  RefineConfig cfg = RefineConfig::defaults_for(0.02, 2.0);
  cfg.iters = 0;
  const RefineResult r = refine_mesh(mesh, surf, cfg);
  CHECK(r.mesh.vertices == mesh.vertices);
  CHECK(r.mesh.faces == mesh.faces);
}

TEST_CASE("non-finite input aborts") {
  TriMesh mesh = make_icosphere(1);
  mesh.vertices[4].x() = std::nan("");
  SurfacePointSet surf{{Vec3(1, 0, 0)}};
  CHECK_THROWS_AS(refine_mesh(mesh, surf, RefineConfig::defaults_for(0.02, 2.0)), NumericalAbort);
}

TEST_CASE("shrunk sphere is pulled back onto the surface") {
  const SceneSurface sphere(Sphere{Vec3::Zero(), 1.0});
  TriMesh mesh = make_icosphere(4, 0.95);
  std::vector<Vec3> gt, gt_n;
  sphere.sample(20000, 1, gt, gt_n);
  const SurfacePointSet surf{gt};
  const RefineConfig cfg = RefineConfig::defaults_for(2.4 / 128, sphere.diameter());
  const RefineResult r = refine_mesh(mesh, surf, cfg);

  std::vector<Vec3> eval, eval_n;
  sphere.sample(20000, 2, eval, eval_n);
  const double before = chamfer(eval, sample_mesh(mesh, 20000, 3).points);
  const double after = chamfer(eval, sample_mesh(r.mesh, 20000, 3).points);
  CHECK(after <= 0.5 * before);
  CHECK(r.mesh.faces == mesh.faces);
  CHECK(r.loss_trace.size() == static_cast<std::size_t>(cfg.iters) + 1);

  // After warm-up the loss does not rise across any 10-step window.
  const std::size_t warmup = 20;
  for (std::size_t i = warmup; i + 10 < r.loss_trace.size(); ++i) {
    CHECK(r.loss_trace[i + 10] <= r.loss_trace[i]);
  }
}

TEST_CASE("refinement is thread-count independent") {
  const SceneSurface sphere(Sphere{Vec3::Zero(), 1.0});
  TriMesh mesh = make_icosphere(3, 0.97);
  std::vector<Vec3> gt, gt_n;
  sphere.sample(5000, 4, gt, gt_n);
  RefineConfig cfg = RefineConfig::defaults_for(0.02, 2.0);
  cfg.iters = 30;
  const RefineResult a = refine_mesh(mesh, SurfacePointSet{gt}, cfg);
  cfg.threads = 3;
  const RefineResult b = refine_mesh(mesh, SurfacePointSet{gt}, cfg);
  CHECK(a.mesh.vertices == b.mesh.vertices);
  CHECK(a.loss_trace == b.loss_trace);
}

}  // TEST_SUITE
