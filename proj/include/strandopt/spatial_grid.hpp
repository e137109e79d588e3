#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "strandopt/types.hpp"

namespace strandopt {

// Uniform grid over a point set for radius and k-nearest queries.
// Cells are addressed by integer coordinates relative to the bounding box min;
// points are stored in a CSR layout so queries allocate nothing.
class SpatialGrid {
 public:
  SpatialGrid() = default;

  SpatialGrid(const std::vector<Vec3>& points, double cell_size) { build(points, cell_size); }

  void build(const std::vector<Vec3>& points, double cell_size) {
    points_ = &points;
    cell_ = cell_size;
    n_ = (int)points.size();
    if (n_ == 0) {
      nx_ = ny_ = nz_ = 0;
      return;
    }
    Vec3 lo = points[0], hi = points[0];
    for (const auto& p : points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    origin_ = lo;
    nx_ = (int)std::floor((hi.x() - lo.x()) / cell_) + 1;
    ny_ = (int)std::floor((hi.y() - lo.y()) / cell_) + 1;
    nz_ = (int)std::floor((hi.z() - lo.z()) / cell_) + 1;
    size_t ncell = (size_t)nx_ * ny_ * nz_;
    start_.assign(ncell + 1, 0);
    for (int i = 0; i < n_; ++i) start_[cell_index(points[i]) + 1]++;
    for (size_t c = 0; c < ncell; ++c) start_[c + 1] += start_[c];
    item_.resize(n_);
    std::vector<int> cursor(start_.begin(), start_.end() - 1);
    for (int i = 0; i < n_; ++i) item_[cursor[cell_index(points[i])]++] = i;
  }

  // Indices of all points with |p - q| <= radius, in ascending index order.
  void query_radius(const Vec3& q, double radius, std::vector<int>& out) const {
    out.clear();
    if (n_ == 0) return;
    int x0, y0, z0, x1, y1, z1;
    cell_range(q, radius, x0, y0, z0, x1, y1, z1);
    double r2 = radius * radius;
    for (int z = z0; z <= z1; ++z)
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          size_t c = ((size_t)z * ny_ + y) * nx_ + x;
          for (int k = start_[c]; k < start_[c + 1]; ++k) {
            int i = item_[k];
            if (((*points_)[i] - q).squaredNorm() <= r2) out.push_back(i);
          }
        }
    std::sort(out.begin(), out.end());
  }

  // k nearest points to q (excluding indices for which skip() is true),
  // sorted by (distance, index). Expands the search radius until the k-th hit
  // is certain: a point beyond the scanned radius could otherwise beat it.
  template <class Skip>
  void query_knn(const Vec3& q, int k, std::vector<int>& out, Skip&& skip) const {
    out.clear();
    if (n_ == 0 || k <= 0) return;
    std::vector<std::pair<double, int>> best;
    int max_ring = nx_ + ny_ + nz_;
    for (int ring = 0;; ++ring) {
      double radius = cell_ * (ring + 1);
      best.clear();
      int x0, y0, z0, x1, y1, z1;
      cell_range(q, radius, x0, y0, z0, x1, y1, z1);
      for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
          for (int x = x0; x <= x1; ++x) {
            size_t c = ((size_t)z * ny_ + y) * nx_ + x;
            for (int kk = start_[c]; kk < start_[c + 1]; ++kk) {
              int i = item_[kk];
              if (skip(i)) continue;
              best.emplace_back(((*points_)[i] - q).squaredNorm(), i);
            }
          }
      std::sort(best.begin(), best.end());
      bool certain = (int)best.size() >= k && best[k - 1].first <= radius * radius;
      bool exhausted = ring >= max_ring;
      if (certain || exhausted) break;
    }
    if ((int)best.size() > k) best.resize(k);
    for (auto& di : best) out.push_back(di.second);
  }

  void query_knn(const Vec3& q, int k, std::vector<int>& out) const {
    query_knn(q, k, out, [](int) { return false; });
  }

 private:
  size_t cell_index(const Vec3& p) const {
    int x = std::clamp((int)std::floor((p.x() - origin_.x()) / cell_), 0, nx_ - 1);
    int y = std::clamp((int)std::floor((p.y() - origin_.y()) / cell_), 0, ny_ - 1);
    int z = std::clamp((int)std::floor((p.z() - origin_.z()) / cell_), 0, nz_ - 1);
    return ((size_t)z * ny_ + y) * nx_ + x;
  }
  void cell_range(const Vec3& q, double radius, int& x0, int& y0, int& z0, int& x1, int& y1,
                  int& z1) const {
    x0 = std::clamp((int)std::floor((q.x() - radius - origin_.x()) / cell_), 0, nx_ - 1);
    y0 = std::clamp((int)std::floor((q.y() - radius - origin_.y()) / cell_), 0, ny_ - 1);
    z0 = std::clamp((int)std::floor((q.z() - radius - origin_.z()) / cell_), 0, nz_ - 1);
    x1 = std::clamp((int)std::floor((q.x() + radius - origin_.x()) / cell_), 0, nx_ - 1);
    y1 = std::clamp((int)std::floor((q.y() + radius - origin_.y()) / cell_), 0, ny_ - 1);
    z1 = std::clamp((int)std::floor((q.z() + radius - origin_.z()) / cell_), 0, nz_ - 1);
  }

  const std::vector<Vec3>* points_ = nullptr;
  double cell_ = 1.0;
  int n_ = 0, nx_ = 0, ny_ = 0, nz_ = 0;
  Vec3 origin_ = Vec3::Zero();
  std::vector<int> start_, item_;
};

}  // namespace strandopt
