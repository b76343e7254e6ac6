#pragma once

// Exact k-nearest-neighbour search in Euclidean distance. Ties are broken by
// the coordinates of the candidate (then its index), so the selected point
// set depends only on the point cloud, not on the order it was stored in.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "wsm/core.hpp"

namespace wsm {

class NearestNeighbours {
 public:
  static constexpr std::size_t kMaxTreeDim = 16;

  NearestNeighbours() = default;
  explicit NearestNeighbours(StateView points)
      : dim_(points.dim()), count_(points.count()),
        coords_(points.data().begin(), points.data().end()) {
    order_.resize(count_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (dim_ == 1) {
      std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return before(a, b); });
      sorted_.resize(count_);
      for (std::size_t i = 0; i < count_; ++i) sorted_[i] = coords_[order_[i]];
    } else if (dim_ <= kMaxTreeDim && count_ > 0) {
      build(0, count_, 0);
    }
  }

  std::size_t size() const { return count_; }
  std::size_t dim() const { return dim_; }

  /// Indices of the k nearest points, nearest first.
  std::vector<std::size_t> query(std::span<const double> x, std::size_t k) const {
    if (k > count_) throw ConfigError("nearest-neighbour query: k exceeds the number of points");
    if (x.size() != dim_) throw ConfigError("nearest-neighbour query: wrong dimension");
    if (k == 0) return {};
    if (dim_ == 1) return query_sorted(x[0], k);
    if (dim_ <= kMaxTreeDim) return query_tree(x, k);
    return query_brute(x, k);
  }

 private:
  struct Candidate {
    double d2;
    std::size_t index;
  };

  struct Node {
    std::size_t begin, end;  // range of order_
    std::size_t axis = 0;
    double split = 0.0;
    int left = -1, right = -1;
  };

  static constexpr std::size_t kLeafSize = 16;

  std::span<const double> point(std::size_t i) const {
    return std::span<const double>(coords_).subspan(i * dim_, dim_);
  }

  // Lexicographic on coordinates, then index.
  bool before(std::size_t a, std::size_t b) const {
    const auto pa = point(a), pb = point(b);
    for (std::size_t c = 0; c < dim_; ++c) {
      if (pa[c] != pb[c]) return pa[c] < pb[c];
    }
    return a < b;
  }

  bool closer(const Candidate& a, const Candidate& b) const {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    return before(a.index, b.index);
  }

  double dist2(std::span<const double> x, std::size_t i) const {
    const auto p = point(i);
    double s = 0.0;
    for (std::size_t c = 0; c < dim_; ++c) s += (p[c] - x[c]) * (p[c] - x[c]);
    return s;
  }

  std::vector<std::size_t> query_sorted(double x, std::size_t k) const {
    auto hi = static_cast<std::size_t>(std::lower_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin());
    auto lo = hi;  // candidates are [lo, hi) taken; next left is lo-1, next right is hi
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
      const bool has_left = lo > 0, has_right = hi < count_;
      bool take_left;
      if (!has_right) take_left = true;
      else if (!has_left) take_left = false;
      else {
        const double dl = x - sorted_[lo - 1], dr = sorted_[hi] - x;
        // equal distance: the smaller coordinate wins
        take_left = dl <= dr;
      }
      if (take_left) out.push_back(order_[--lo]);
      else out.push_back(order_[hi++]);
    }
    return out;
  }

  std::vector<std::size_t> query_brute(std::span<const double> x, std::size_t k) const {
    std::vector<Candidate> all(count_);
    for (std::size_t i = 0; i < count_; ++i) all[i] = {dist2(x, i), i};
    auto cmp = [&](const Candidate& a, const Candidate& b) { return closer(a, b); };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), cmp);
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = all[i].index;
    return out;
  }

  int build(std::size_t begin, std::size_t end, std::size_t depth) {
    Node node{begin, end};
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) return id;
    const std::size_t axis = depth % dim_;
    const std::size_t mid = begin + (end - begin) / 2;
    auto first = order_.begin() + static_cast<std::ptrdiff_t>(begin);
    std::nth_element(first, order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return coords_[a * dim_ + axis] < coords_[b * dim_ + axis]; });
    nodes_[id].axis = axis;
    nodes_[id].split = coords_[order_[mid] * dim_ + axis];
    const int l = build(begin, mid, depth + 1);
    const int r = build(mid, end, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  std::vector<std::size_t> query_tree(std::span<const double> x, std::size_t k) const {
    auto cmp = [&](const Candidate& a, const Candidate& b) { return closer(a, b); };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(cmp)> heap(cmp);  // worst on top
    search(0, x, k, heap);
    std::vector<std::size_t> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = heap.top().index;
      heap.pop();
    }
    return out;
  }

  template <class Heap>
  void search(int id, std::span<const double> x, std::size_t k, Heap& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.left < 0) {
      for (std::size_t p = node.begin; p < node.end; ++p) {
        const Candidate c{dist2(x, order_[p]), order_[p]};
        if (heap.size() < k) {
          heap.push(c);
        } else if (closer(c, heap.top())) {
          heap.pop();
          heap.push(c);
        }
      }
      return;
    }
    const double diff = x[node.axis] - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    search(near, x, k, heap);
    // ties on the boundary must still be visited
    if (heap.size() < k || diff * diff <= heap.top().d2) search(far, x, k, heap);
  }

  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  std::vector<double> coords_;
  std::vector<std::size_t> order_;
  std::vector<double> sorted_;
  std::vector<Node> nodes_;
};

}  // namespace wsm
