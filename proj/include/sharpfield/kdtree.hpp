#pragma once
#include <Eigen/Dense>
#include <algorithm>
#include <queue>
#include <vector>

#include "sharpfield/common.hpp"

namespace sharpfield {

/// Exact nearest-neighbor tree (median-split kd-tree, branch-and-bound
/// queries).  Exactness matters: the metrics acceptance compares results
/// against O(n^2) brute force to 1e-12.
template <int D>
class KdTree {
 public:
  using Pt = Eigen::Matrix<double, D, 1>;

  KdTree() = default;
  explicit KdTree(std::vector<Pt> pts) : pts_(std::move(pts)) {
    if (pts_.empty()) throw Error("kd-tree over empty point set");
    order_.resize(pts_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    nodes_.reserve(2 * pts_.size());
    root_ = build(0, static_cast<int>(order_.size()));
  }

  int size() const { return static_cast<int>(pts_.size()); }
  const Pt& point(int i) const { return pts_[i]; }

  /// Index of the nearest point; squared distance in d2 if given.
  int nearest(const Pt& q, double* d2_out = nullptr) const {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    search(root_, q, best, best_d2);
    if (d2_out) *d2_out = best_d2;
    return best;
  }

  /// k nearest (k clamped to size).  Results sorted by ascending distance.
  void knearest(const Pt& q, int k, std::vector<int>& idx,
                std::vector<double>& d2) const {
    k = std::min<int>(k, size());
    Heap heap;
    search_k(root_, q, k, heap);
    idx.resize(heap.size());
    d2.resize(heap.size());
    for (int i = static_cast<int>(heap.size()) - 1; i >= 0; --i) {
      idx[i] = heap.top().second;
      d2[i] = heap.top().first;
      heap.pop();
    }
  }

 private:
  struct Node {
    int axis = -1;        // -1 marks a leaf
    double split = 0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
  };
  using Heap = std::priority_queue<std::pair<double, int>>;

  static constexpr int kLeafSize = 16;

  int build(int begin, int end) {
    Node n;
    if (end - begin <= kLeafSize) {
      n.begin = begin;
      n.end = end;
      nodes_.push_back(n);
      return static_cast<int>(nodes_.size()) - 1;
    }
    Pt lo = pts_[order_[begin]], hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(pts_[order_[i]]);
      hi = hi.cwiseMax(pts_[order_[i]]);
    }
    int axis;
    (hi - lo).maxCoeff(&axis);
    int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return pts_[a][axis] < pts_[b][axis]; });
    n.axis = axis;
    n.split = pts_[order_[mid]][axis];
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(n);
    int l = build(begin, mid);
    int r = build(mid, end);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void search(int ni, const Pt& q, int& best, double& best_d2) const {
    const Node& n = nodes_[ni];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        double d2 = (pts_[order_[i]] - q).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best = order_[i];
        }
      }
      return;
    }
    double delta = q[n.axis] - n.split;
    int first = delta < 0 ? n.left : n.right;
    int second = delta < 0 ? n.right : n.left;
    search(first, q, best, best_d2);
    if (delta * delta < best_d2) search(second, q, best, best_d2);
  }

  void search_k(int ni, const Pt& q, int k, Heap& heap) const {
    const Node& n = nodes_[ni];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        double d2 = (pts_[order_[i]] - q).squaredNorm();
        if (static_cast<int>(heap.size()) < k) {
          heap.push({d2, order_[i]});
        } else if (d2 < heap.top().first) {
          heap.pop();
          heap.push({d2, order_[i]});
        }
      }
      return;
    }
    double delta = q[n.axis] - n.split;
    int first = delta < 0 ? n.left : n.right;
    int second = delta < 0 ? n.right : n.left;
    search_k(first, q, k, heap);
    if (static_cast<int>(heap.size()) < k || delta * delta < heap.top().first)
      search_k(second, q, k, heap);
  }

  std::vector<Pt> pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace sharpfield
