#pragma once

#include "odrgen/clustering.hpp"

#include <optional>

namespace odrgen {

struct SearchConfig {
  double step = 3.0;
  double search_length = 27.0;  // 1.5x the 18 m dash-center spacing
  double ball_radius = 1.75;    // half the minimum lane width
  double gamma = 0.5;
  double combine_length = 63.0;
  double seg_attach_tol = 0.5;
  /// Bend the occlusion sweep along the curvature estimated from the line tail.
  bool combine_follow_curvature = true;

  void validate() const {
    if (!(step > 0 && step <= search_length)) throw ConfigError("search: need 0 < step <= search_length");
    if (!(ball_radius > 0)) throw ConfigError("search: ball_radius must be > 0");
    if (!(gamma >= 0 && gamma <= 1)) throw ConfigError("search: gamma must lie in [0,1]");
    if (!(combine_length >= step)) throw ConfigError("search: combine_length must be >= step");
    if (!(seg_attach_tol > 0)) throw ConfigError("search: seg_attach_tol must be > 0");
  }
};

/// Ordered chain of cluster centers hypothesized to be one physical marking line.
struct CandidateLine {
  std::uint64_t id = 0;
  std::vector<std::size_t> cluster_ids;
  std::vector<Vec3> centers;
  std::vector<Vec3> directions;  // unified raw direction of each member cluster
  Vec3 stabilized_direction = Vec3::UnitX();

  std::size_t size() const noexcept { return centers.size(); }
};

namespace lanes {

/// Blend of the latest and previous raw directions, renormalized. An all-zero
/// blend (antiparallel inputs) falls back to the latest direction.
inline Vec3 stabilize_direction(const Vec3& v_star_i, const Vec3& v_star_prev, double gamma) {
  const Vec3 v = gamma * v_star_i + (1.0 - gamma) * v_star_prev;
  const double n = v.norm();
  if (!(n > 1e-12)) return v_star_i;
  return v / n;
}

/// Reorders members by the greedy nearest-neighbour chain from the origin.
inline CandidateLine dist_sort(CandidateLine line, const Vec3& origin = Vec3::Zero()) {
  if (line.size() < 2) return line;
  const auto order = chain_order(line.centers, origin);
  CandidateLine out;
  out.id = line.id;
  out.stabilized_direction = line.stabilized_direction;
  for (auto i : order) {
    out.cluster_ids.push_back(line.cluster_ids[i]);
    out.centers.push_back(line.centers[i]);
    out.directions.push_back(line.directions[i]);
  }
  return out;
}

/// Cluster centers with exclusive consumption state.
class ClusterIndex {
 public:
  ClusterIndex(const std::vector<Cluster>& clusters, double cell) : clusters_(&clusters) {
    std::vector<Vec3> centers(clusters.size());
    for (std::size_t i = 0; i < clusters.size(); ++i) centers[i] = clusters[i].center;
    grid_ = Grid3(std::move(centers), cell);
    consumed_.assign(clusters.size(), 0);
  }

  const Cluster& cluster(std::size_t i) const { return (*clusters_)[i]; }
  bool consumed(std::size_t i) const { return consumed_[i] != 0; }
  void consume(std::size_t i) { consumed_[i] = 1; }

  /// Nearest unconsumed center within radius of q (ties to lower index).
  std::optional<std::size_t> nearest_free(const Vec3& q, double radius) const {
    std::optional<std::size_t> best;
    double best_d2 = 0;
    grid_.for_each_in_radius(q, radius, [&](std::size_t j, double d2) {
      if (consumed_[j]) return;
      if (!best || d2 < best_d2 || (d2 == best_d2 && j < *best)) {
        best = j;
        best_d2 = d2;
      }
    });
    return best;
  }

  /// Unconsumed centers within tol of segment [a, b], ordered along it.
  std::vector<std::size_t> free_near_segment(const Vec3& a, const Vec3& b, double tol) const {
    std::vector<std::pair<double, std::size_t>> hits;
    const Vec3 pad = Vec3::Constant(tol);
    grid_.for_each_in_box(a.cwiseMin(b) - pad, a.cwiseMax(b) + pad, [&](std::size_t j) {
      if (consumed_[j]) return;
      double t = 0;
      if (point_segment_distance<Vec3>(grid_.point(j), a, b, &t) <= tol) hits.emplace_back(t, j);
    });
    std::sort(hits.begin(), hits.end());
    std::vector<std::size_t> out;
    for (auto& h : hits) out.push_back(h.second);
    return out;
  }

 private:
  const std::vector<Cluster>* clusters_;
  Grid3 grid_;
  std::vector<char> consumed_;
};

/// Directional search from a seed: probe step, 2*step, ... up to search_length
/// ahead along the stabilized direction; the first ball hit extends the line and
/// clusters lying on the new segment are picked up as well.
inline CandidateLine search_mark(std::size_t seed, ClusterIndex& index, const SearchConfig& cfg, std::uint64_t id) {
  CandidateLine line;
  line.id = id;
  auto add = [&](std::size_t j) {
    index.consume(j);
    line.cluster_ids.push_back(j);
    line.centers.push_back(index.cluster(j).center);
    line.directions.push_back(index.cluster(j).raw_direction);
  };
  add(seed);
  std::size_t cur = seed;
  Vec3 dir = index.cluster(seed).raw_direction;
  const int steps = static_cast<int>(std::floor(cfg.search_length / cfg.step + 1e-9));
  while (true) {
    std::optional<std::size_t> hit;
    const Vec3 from = index.cluster(cur).center;
    for (int k = 1; k <= steps && !hit; ++k) hit = index.nearest_free(from + dir * (k * cfg.step), cfg.ball_radius);
    if (!hit) break;
    for (auto j : index.free_near_segment(from, index.cluster(*hit).center, cfg.seg_attach_tol))
      if (j != *hit) add(j);
    add(*hit);
    dir = stabilize_direction(index.cluster(*hit).raw_direction, index.cluster(cur).raw_direction, cfg.gamma);
    cur = *hit;
  }
  line.stabilized_direction = dir;
  return dist_sort(std::move(line));
}

/// Seeds taken repeatedly from the unconsumed cluster closest to the origin.
inline std::vector<CandidateLine> generate_candidates(const std::vector<Cluster>& clusters, const SearchConfig& cfg,
                                                      const Vec3& origin = Vec3::Zero()) {
  std::vector<std::pair<double, std::size_t>> order(clusters.size());
  for (std::size_t i = 0; i < clusters.size(); ++i) order[i] = {(clusters[i].center - origin).norm(), i};
  std::sort(order.begin(), order.end());
  ClusterIndex index(clusters, cfg.ball_radius);
  std::vector<CandidateLine> lines;
  std::uint64_t next_id = 1;
  for (const auto& [d, i] : order) {
    if (index.consumed(i)) continue;
    lines.push_back(search_mark(i, index, cfg, next_id++));
  }
  return lines;
}

namespace detail {

inline double distance_to_line(const Vec3& q, const CandidateLine& l) {
  if (l.size() == 1) return (q - l.centers[0]).norm();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < l.size(); ++i)
    best = std::min(best, point_segment_distance<Vec3>(q, l.centers[i], l.centers[i + 1]));
  return best;
}

inline CandidateLine merge(const CandidateLine& keep, const CandidateLine& other) {
  CandidateLine m = keep;
  m.cluster_ids.insert(m.cluster_ids.end(), other.cluster_ids.begin(), other.cluster_ids.end());
  m.centers.insert(m.centers.end(), other.centers.begin(), other.centers.end());
  m.directions.insert(m.directions.end(), other.directions.begin(), other.directions.end());
  return dist_sort(std::move(m));
}

inline Vec3 end_direction(const CandidateLine& l, double gamma) {
  const std::size_t m = l.size();
  if (m >= 2) return stabilize_direction(l.directions[m - 1], l.directions[m - 2], gamma);
  return l.directions.back();
}

/// Signed XY curvature through three tail centers spanning >= 15 m, else 0.
inline double tail_curvature(const CandidateLine& l) {
  const std::size_t m = l.size();
  if (m < 3) return 0.0;
  const Vec2 e = l.centers[m - 1].head<2>();
  std::size_t a = m;
  for (std::size_t i = m - 1; i-- > 0;) {
    const double d = (l.centers[i].head<2>() - e).norm();
    if (d > 60.0) break;
    a = i;
    if (d >= 30.0) break;
  }
  if (a == m) return 0.0;
  const Vec2 pa = l.centers[a].head<2>();
  const double span = (e - pa).norm();
  if (span < 15.0) return 0.0;
  std::size_t mid = a;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = a + 1; i + 1 < m; ++i) {
    const double dev = std::abs((l.centers[i].head<2>() - e).norm() - 0.5 * span);
    if (dev < best) {
      best = dev;
      mid = i;
    }
  }
  if (mid == a) return 0.0;
  const Vec2 pm = l.centers[mid].head<2>();
  const Vec2 u = pm - pa, v = e - pm;
  const double cross = u.x() * v.y() - u.y() * v.x();
  const double k = 2.0 * cross / (u.norm() * v.norm() * span);
  return std::clamp(k, -1.0 / 150.0, 1.0 / 150.0);
}

/// Position at distance d along a planar arc leaving `from` with direction `dir`.
inline Vec3 arc_probe(const Vec3& from, const Vec3& dir, double kappa, double d) {
  const double hxy = dir.head<2>().norm();
  if (!(hxy > 1e-12)) return from + dir * d;
  const double th = std::atan2(dir.y(), dir.x());
  const double slope = dir.z() / hxy;
  Vec3 p;
  if (std::abs(kappa * d) < 1e-9) {
    p << from.x() + d * std::cos(th), from.y() + d * std::sin(th), 0.0;
  } else {
    p << from.x() + (std::sin(th + kappa * d) - std::sin(th)) / kappa,
        from.y() - (std::cos(th + kappa * d) - std::cos(th)) / kappa, 0.0;
  }
  p.z() = from.z() + slope * d;
  return p;
}

}  // namespace detail

/// Merges candidates to a fixed point: (a) an endpoint lying on another line's
/// segments joins the two; (b) an occlusion sweep from each end point up to
/// combine_length finds another line's start. The searching line keeps its id.
inline std::vector<CandidateLine> combine_candidates(std::vector<CandidateLine> lines, const SearchConfig& cfg,
                                                     const Vec3& origin = Vec3::Zero()) {
  std::sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (auto& l : lines) l = dist_sort(std::move(l), origin);
  const int steps = static_cast<int>(std::floor(cfg.combine_length / cfg.step + 1e-9));

  while (true) {
    bool merged = false;
    // (a) endpoint on another line's segments; that line's id survives.
    for (std::size_t a = 0; a < lines.size() && !merged; ++a) {
      for (std::size_t b = 0; b < lines.size() && !merged; ++b) {
        if (a == b) continue;
        const auto& la = lines[a];
        if (detail::distance_to_line(la.centers.front(), lines[b]) <= cfg.seg_attach_tol ||
            detail::distance_to_line(la.centers.back(), lines[b]) <= cfg.seg_attach_tol) {
          lines[b] = detail::merge(lines[b], la);
          lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(a));
          merged = true;
        }
      }
    }
    // (b) sweep from each end point against other lines' start points.
    for (std::size_t a = 0; a < lines.size() && !merged; ++a) {
      const auto& la = lines[a];
      const Vec3 end = la.centers.back();
      const Vec3 dir = detail::end_direction(la, cfg.gamma);
      const double kappa = cfg.combine_follow_curvature ? detail::tail_curvature(la) : 0.0;
      std::optional<std::size_t> hit;
      for (int k = 1; k <= steps && !hit; ++k) {
        const Vec3 probe = detail::arc_probe(end, dir, kappa, k * cfg.step);
        double best = 0.0;
        for (std::size_t b = 0; b < lines.size(); ++b) {
          if (b == a) continue;
          const double d = (lines[b].centers.front() - probe).norm();
          if (d > cfg.ball_radius) continue;
          if (!hit || d < best || (d == best && lines[b].id < lines[*hit].id)) {
            best = d;
            hit = b;
          }
        }
      }
      if (hit) {
        lines[a] = detail::merge(la, lines[*hit]);
        lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(*hit));
        merged = true;
      }
    }
    if (!merged) break;
  }
  return lines;
}

}  // namespace lanes
}  // namespace odrgen
