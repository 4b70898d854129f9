#pragma once

#include "odrgen/common.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <vector>

namespace odrgen {

/// Uniform hashed grid over a fixed point set. Exact radius and box queries;
/// the point set is immutable after construction so concurrent reads are safe.
template <int Dim>
class UniformGrid {
 public:
  using Vec = Eigen::Matrix<double, Dim, 1>;
  using Cell = std::array<std::int64_t, Dim>;

  UniformGrid() = default;

  UniformGrid(std::vector<Vec> points, double cell_size) : points_(std::move(points)), cell_(cell_size) {
    if (!(cell_size > 0.0)) throw std::invalid_argument("grid cell size must be > 0");
    std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const Cell c = cell_of(points_[i]);
      keyed[i] = {pack(c), static_cast<std::uint32_t>(i)};
      for (int d = 0; d < Dim; ++d) {
        lo_[d] = i == 0 ? c[d] : std::min(lo_[d], c[d]);
        hi_[d] = i == 0 ? c[d] : std::max(hi_[d], c[d]);
      }
    }
    std::sort(keyed.begin(), keyed.end());
    order_.resize(keyed.size());
    for (std::size_t i = 0; i < keyed.size(); ++i) {
      order_[i] = keyed[i].second;
      auto [it, inserted] = ranges_.try_emplace(keyed[i].first, static_cast<std::uint32_t>(i),
                                                static_cast<std::uint32_t>(i + 1));
      if (!inserted) it->second.second = static_cast<std::uint32_t>(i + 1);
    }
  }

  std::size_t size() const noexcept { return points_.size(); }
  const Vec& point(std::size_t i) const { return points_[i]; }
  double cell_size() const noexcept { return cell_; }

  Cell cell_of(const Vec& p) const {
    Cell c;
    for (int d = 0; d < Dim; ++d) c[d] = static_cast<std::int64_t>(std::floor(p[d] / cell_));
    return c;
  }

  /// Calls fn(index) for every point in the axis-aligned box [lo, hi].
  template <class Fn>
  void for_each_in_box(const Vec& lo, const Vec& hi, Fn&& fn) const {
    const Cell a = cell_of(lo);
    const Cell b = cell_of(hi);
    visit_cells(a, b, [&](const Cell& c) {
      auto it = ranges_.find(pack(c));
      if (it == ranges_.end()) return;
      for (std::uint32_t k = it->second.first; k < it->second.second; ++k) {
        const auto idx = order_[k];
        const Vec& p = points_[idx];
        bool inside = true;
        for (int d = 0; d < Dim; ++d) inside = inside && p[d] >= lo[d] && p[d] <= hi[d];
        if (inside) fn(static_cast<std::size_t>(idx));
      }
    });
  }

  /// Calls fn(index, squared distance) for every point with |p - q| <= radius.
  template <class Fn>
  void for_each_in_radius(const Vec& q, double radius, Fn&& fn) const {
    const double r2 = radius * radius;
    const Vec span = Vec::Constant(radius);
    const Cell a = cell_of(q - span);
    const Cell b = cell_of(q + span);
    visit_cells(a, b, [&](const Cell& c) {
      auto it = ranges_.find(pack(c));
      if (it == ranges_.end()) return;
      for (std::uint32_t k = it->second.first; k < it->second.second; ++k) {
        const auto idx = order_[k];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 <= r2) fn(static_cast<std::size_t>(idx), d2);
      }
    });
  }

  /// Indices within radius, ascending.
  std::vector<std::size_t> radius_query(const Vec& q, double radius) const {
    std::vector<std::size_t> out;
    for_each_in_radius(q, radius, [&](std::size_t i, double) { out.push_back(i); });
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Visits points in cells whose Chebyshev ring distance from `center` equals `ring`.
  template <class Fn>
  void for_each_in_ring(const Cell& center, std::int64_t ring, Fn&& fn) const {
    auto emit = [&](const Cell& c) {
      auto it = ranges_.find(pack(c));
      if (it == ranges_.end()) return;
      for (std::uint32_t k = it->second.first; k < it->second.second; ++k) fn(static_cast<std::size_t>(order_[k]));
    };
    if (ring == 0) {
      emit(center);
      return;
    }
    // Outer loop over dims 1..Dim-1; dim 0 spans fully only on the boundary.
    Cell a, b;
    for (int d = 0; d < Dim; ++d) {
      a[d] = center[d] - ring;
      b[d] = center[d] + ring;
    }
    Cell c = a;
    while (true) {
      bool on_boundary = false;
      for (int d = 1; d < Dim; ++d) on_boundary = on_boundary || c[d] == a[d] || c[d] == b[d];
      if (on_boundary) {
        for (c[0] = a[0]; c[0] <= b[0]; ++c[0]) emit(c);
      } else {
        c[0] = a[0];
        emit(c);
        c[0] = b[0];
        emit(c);
      }
      int d = 1;
      for (; d < Dim; ++d) {
        if (++c[d] <= b[d]) break;
        c[d] = a[d];
      }
      if (d == Dim) return;
    }
  }

  /// Index of the point nearest to q (ties to the lower index); nullopt if empty.
  std::optional<std::size_t> nearest(const Vec& q) const {
    if (points_.empty()) return std::nullopt;
    const Cell c0 = cell_of(q);
    std::int64_t max_ring = 0;
    for (int d = 0; d < Dim; ++d) max_ring = std::max({max_ring, c0[d] - lo_[d], hi_[d] - c0[d]});
    std::size_t best = points_.size();
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
      for_each_in_ring(c0, ring, [&](std::size_t j) {
        const double d2 = (points_[j] - q).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && j < best)) {
          best_d2 = d2;
          best = j;
        }
      });
      // Unscanned cells lie at least ring*cell away.
      const double bound = static_cast<double>(ring) * cell_;
      if (best != points_.size() && best_d2 <= bound * bound) break;
    }
    return best;
  }

 private:
  static std::uint64_t pack(const Cell& c) {
    constexpr int bits = 64 / Dim;
    constexpr std::int64_t bias = std::int64_t{1} << (bits - 1);
    constexpr std::uint64_t mask = (bits == 64) ? ~std::uint64_t{0} : ((std::uint64_t{1} << bits) - 1);
    std::uint64_t key = 0;
    for (int d = 0; d < Dim; ++d) key = (key << bits) | (static_cast<std::uint64_t>(c[d] + bias) & mask);
    return key;
  }

  template <class Fn>
  static void visit_cells(const Cell& a, const Cell& b, Fn&& fn) {
    Cell c = a;
    while (true) {
      fn(c);
      int d = 0;
      for (; d < Dim; ++d) {
        if (++c[d] <= b[d]) break;
        c[d] = a[d];
      }
      if (d == Dim) return;
    }
  }

  std::vector<Vec> points_;
  double cell_ = 1.0;
  Cell lo_{}, hi_{};
  std::vector<std::uint32_t> order_;
  std::unordered_map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>> ranges_;
};

using Grid2 = UniformGrid<2>;
using Grid3 = UniformGrid<3>;

/// Greedy nearest-neighbour chain: start at the point closest to `origin`, then
/// repeatedly append the nearest unvisited point (3D distance; ties to lower index).
/// Returns the visiting order.
inline std::vector<std::size_t> chain_order(const std::vector<Vec3>& pts, const Vec3& origin = Vec3::Zero(),
                                            double cell = 5.0) {
  const std::size_t n = pts.size();
  std::vector<std::size_t> order;
  if (n == 0) return order;
  order.reserve(n);

  std::vector<Vec2> xy(n);
  for (std::size_t i = 0; i < n; ++i) xy[i] = pts[i].head<2>();
  const Grid2 grid(xy, cell);
  std::vector<char> visited(n, 0);

  std::size_t cur = 0;
  double best0 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (pts[i] - origin).norm();
    if (d < best0) {
      best0 = d;
      cur = i;
    }
  }

  // Bounding box ring limit: beyond this every point has been scanned.
  Vec2 lo = xy[0], hi = xy[0];
  for (const auto& p : xy) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const auto max_ring = static_cast<std::int64_t>(std::ceil((hi - lo).maxCoeff() / cell)) + 2;

  std::size_t remaining = n;
  while (true) {
    visited[cur] = 1;
    order.push_back(cur);
    if (--remaining == 0) break;
    const auto c0 = grid.cell_of(xy[cur]);
    std::size_t best = n;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
      grid.for_each_in_ring(c0, ring, [&](std::size_t j) {
        if (visited[j]) return;
        const double d2 = (pts[j] - pts[cur]).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && j < best)) {
          best_d2 = d2;
          best = j;
        }
      });
      // Every unscanned cell lies at least ring*cell away in XY.
      if (best != n) {
        const double bound = static_cast<double>(ring) * cell;
        if (best_d2 <= bound * bound) break;
      }
    }
    cur = best;
  }
  return order;
}

}  // namespace odrgen
