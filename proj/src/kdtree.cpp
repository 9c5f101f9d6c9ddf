#include "evac3d/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <stdexcept>

namespace evac3d {
namespace {

constexpr int kLeafSize = 12;

bool closer(double d2a, std::size_t ia, double d2b, std::size_t ib) {
  return d2a < d2b || (d2a == d2b && ia < ib);
}

}  // namespace

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<int>(points_.size()));
  }
}

int KdTree::build(int begin, int end) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{});
  if (end - begin <= kLeafSize) {
    nodes_[index].begin = begin;
    nodes_[index].end = end;
    return index;
  }
  Eigen::AlignedBox3d box;
  for (int i = begin; i < end; ++i) box.extend(points_[order_[i]]);
  Eigen::Index axis = 0;
  box.sizes().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  Node& node = nodes_[index];
  node.axis = static_cast<int>(axis);
  node.split = split;
  node.left = left;
  node.right = right;
  return index;
}

KdTree::Neighbor KdTree::nearest(const Vec3& query) const {
  if (points_.empty()) throw std::logic_error("nearest query on empty k-d tree");
  Neighbor best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
  // Stack of (node, lower bound on squared distance).
  std::vector<std::pair<int, double>> stack;
  stack.reserve(64);
  stack.emplace_back(0, 0.0);
  while (!stack.empty()) {
    auto [ni, bound] = stack.back();
    stack.pop_back();
    if (bound > best.dist2) continue;
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const auto idx = static_cast<std::size_t>(order_[i]);
        const double d2 = squared_distance(points_[idx], query);
        if (closer(d2, idx, best.dist2, best.index)) best = {idx, d2};
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    // Points equal to the split value can sit on either side, so the far
    // bound is the plane distance (never larger than the true distance).
    stack.emplace_back(far, std::max(bound, diff * diff));
    stack.emplace_back(near, bound);
  }
  return best;
}

std::vector<KdTree::Neighbor> KdTree::knn(const Vec3& query, std::size_t k) const {
  std::vector<Neighbor> result;
  if (k == 0 || points_.empty()) return result;
  auto cmp = [](const Neighbor& a, const Neighbor& b) {
    return closer(a.dist2, a.index, b.dist2, b.index);
  };
  // Max-heap on (dist2, index): top is the current worst kept neighbor.
  std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(cmp)> heap(cmp);
  std::vector<std::pair<int, double>> stack;
  stack.reserve(64);
  stack.emplace_back(0, 0.0);
  while (!stack.empty()) {
    auto [ni, bound] = stack.back();
    stack.pop_back();
    if (heap.size() == k && bound > heap.top().dist2) continue;
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const auto idx = static_cast<std::size_t>(order_[i]);
        const double d2 = squared_distance(points_[idx], query);
        if (heap.size() < k) {
          heap.push({idx, d2});
        } else if (closer(d2, idx, heap.top().dist2, heap.top().index)) {
          heap.pop();
          heap.push({idx, d2});
        }
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    stack.emplace_back(far, std::max(bound, diff * diff));
    stack.emplace_back(near, bound);
  }
  result.resize(heap.size());
  for (std::size_t i = heap.size(); i-- > 0;) {
    result[i] = heap.top();
    heap.pop();
  }
  return result;
}

}  // namespace evac3d
