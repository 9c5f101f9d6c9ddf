#include "evac3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "evac3d/kdtree.hpp"

namespace evac3d {

OrientedPointSet sample_mesh(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  OrientedPointSet out;
  if (n == 0) return out;
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cumulative[f] = total;
  }
  if (!(total > 0.0)) throw std::invalid_argument("sample_mesh: mesh has no positive-area face");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  out.points.reserve(n);
  out.normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = uni(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    std::size_t f = std::min<std::size_t>(it - cumulative.begin(), mesh.faces.size() - 1);
    // Skip zero-area faces that upper_bound can land on through ties.
    while (mesh.face_area(f) == 0.0 && f + 1 < mesh.faces.size()) ++f;
    double u = uni(rng), v = uni(rng);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const auto& t = mesh.faces[f];
    const Vec3& a = mesh.vertices[t[0]];
    out.points.push_back(a + u * (mesh.vertices[t[1]] - a) + v * (mesh.vertices[t[2]] - a));
    out.normals.push_back(mesh.face_normal(f));
  }
  return out;
}

NormalEstimate estimate_normals(const std::vector<Vec3>& points, std::size_t k) {
  if (points.size() <= k) {
    throw std::invalid_argument("estimate_normals: need more than k points");
  }
  NormalEstimate est;
  est.set.points = points;
  est.set.normals.resize(points.size());
  est.degenerate.assign(points.size(), false);
  const KdTree tree(points);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto nbrs = tree.knn(points[i], k);
    Vec3 mean = Vec3::Zero();
    for (const auto& nb : nbrs) mean += points[nb.index];
    mean /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& nb : nbrs) {
      const Vec3 d = points[nb.index] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
    const Vec3 evals = solver.eigenvalues();  // ascending
    const double trace = evals.sum();
    const bool degenerate = !(trace > 1e-24) || (evals[1] - evals[0]) <= 1e-12 * trace;
    if (degenerate) {
      est.set.normals[i] = Vec3::UnitZ();
      est.degenerate[i] = true;
      ++est.degenerate_count;
    } else {
      est.set.normals[i] = solver.eigenvectors().col(0).normalized();
    }
  }
  return est;
}

namespace {

double mean_nearest_distance(const std::vector<Vec3>& from, const KdTree& to) {
  double sum = 0.0;
  for (const auto& p : from) sum += std::sqrt(to.nearest(p).dist2);
  return sum / static_cast<double>(from.size());
}

}  // namespace

double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty point set");
  const KdTree ta(a), tb(b);
  return mean_nearest_distance(a, tb) + mean_nearest_distance(b, ta);
}

double normal_consistency(const OrientedPointSet& gt, const OrientedPointSet& pred) {
  if (gt.empty() || pred.empty()) throw std::invalid_argument("normal_consistency: empty point set");
  if (gt.normals.size() != gt.points.size() || pred.normals.size() != pred.points.size()) {
    throw std::invalid_argument("normal_consistency: missing normals");
  }
  const KdTree tree(pred.points);
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto nb = tree.nearest(gt.points[i]);
    sum += std::abs(gt.normals[i].dot(pred.normals[nb.index]));
  }
  return sum / static_cast<double>(gt.size());
}

}  // namespace evac3d
