#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evac3d/geometry.hpp"

namespace evac3d {

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Static 3-D k-d tree with exact nearest and k-nearest queries. Ties are
/// broken toward the lower point index, so results match a brute-force scan.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index = 0;
    double dist2 = 0.0;
  };

  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points);

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  /// Throws std::logic_error on an empty tree.
  Neighbor nearest(const Vec3& query) const;
  /// Up to k neighbors sorted by (dist2, index).
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;

 private:
  struct Node {
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;
  };
  int build(int begin, int end);

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace evac3d
