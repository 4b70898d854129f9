#pragma once

#include "odrgen/ingest.hpp"
#include "odrgen/spatial_grid.hpp"

#include <deque>
#include <random>

namespace odrgen {

struct ClusterConfig {
  double dbscan_eps = 0.4;
  int dbscan_min_pts = 5;
  double split_threshold = 30.0;
  double slice_length = 6.0;
  int line_ransac_iterations = 100;
  double line_ransac_tol = 0.05;
  std::uint64_t rng_seed = 42;

  void validate() const {
    if (!(dbscan_eps > 0)) throw ConfigError("clustering: dbscan_eps must be > 0");
    if (dbscan_min_pts < 1) throw ConfigError("clustering: dbscan_min_pts must be >= 1");
    if (!(split_threshold > slice_length && slice_length > 0))
      throw ConfigError("clustering: need split_threshold > slice_length > 0");
    if (line_ransac_iterations < 1 || !(line_ransac_tol > 0))
      throw ConfigError("clustering: line RANSAC iterations/tolerance invalid");
  }
};

/// One marking blob with its bounding-box center and (unsigned until unified)
/// principal direction.
struct Cluster {
  PointCloud points;
  Vec3 center = Vec3::Zero();
  Vec3 raw_direction = Vec3::UnitX();
  double length = 0.0;
};

struct DbscanLabels {
  std::vector<int> labels;  // cluster index, or -1 for noise
  std::vector<char> core;
  int cluster_count = 0;
};

namespace clustering {

/// Density-based clustering. A point is core iff at least min_pts points
/// (itself included) lie within eps. Clusters are numbered by the lowest index
/// of the core point that opened them; border points go to the first cluster
/// that reaches them.
inline DbscanLabels dbscan_labels(const std::vector<Vec3>& pts, double eps, int min_pts) {
  const std::size_t n = pts.size();
  DbscanLabels out;
  out.labels.assign(n, -2);  // -2 = unvisited
  out.core.assign(n, 0);
  if (n == 0) return out;
  const Grid3 grid(pts, eps);
  std::vector<std::size_t> nbrs;
  auto query = [&](std::size_t i) {
    nbrs.clear();
    grid.for_each_in_radius(pts[i], eps, [&](std::size_t j, double) { nbrs.push_back(j); });
    std::sort(nbrs.begin(), nbrs.end());
  };
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.labels[i] != -2) continue;
    query(i);
    if (static_cast<int>(nbrs.size()) < min_pts) {
      out.labels[i] = -1;
      continue;
    }
    const int cid = out.cluster_count++;
    out.labels[i] = cid;
    out.core[i] = 1;
    for (auto j : nbrs) queue.push_back(j);
    while (!queue.empty()) {
      const auto q = queue.front();
      queue.pop_front();
      if (out.labels[q] == -1) out.labels[q] = cid;  // border, already known non-core
      if (out.labels[q] != -2) continue;
      out.labels[q] = cid;
      query(q);
      if (static_cast<int>(nbrs.size()) >= min_pts) {
        out.core[q] = 1;
        for (auto j : nbrs)
          if (out.labels[j] < 0) queue.push_back(j);
      }
    }
  }
  return out;
}

inline Vec3 calc_center_bb(const PointCloud& points) {
  if (points.empty()) throw EstimationError("calc_center_bb: empty point set");
  Vec3 lo = points.points.front().pos(), hi = lo;
  for (const auto& p : points.points) {
    lo = lo.cwiseMin(p.pos());
    hi = hi.cwiseMax(p.pos());
  }
  return 0.5 * (lo + hi);
}

/// RANSAC 3D line over 2-point samples, refined by the principal direction of the
/// consensus set. Points are sorted first so the result does not depend on the
/// input order. Sign is arbitrary.
inline Vec3 line_ransac(const PointCloud& points, const ClusterConfig& cfg) {
  auto pts = points.positions();
  std::sort(pts.begin(), pts.end(), [](const Vec3& a, const Vec3& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const std::size_t n = pts.size();
  if (n < 2) throw EstimationError("line_ransac needs >= 2 distinct points");
  if (n == 2) return (pts[1] - pts[0]).normalized();

  std::mt19937_64 rng(cfg.rng_seed);
  const double tol2 = cfg.line_ransac_tol * cfg.line_ransac_tol;
  auto count_inliers = [&](const Vec3& a, const Vec3& dir) {
    std::size_t c = 0;
    for (const auto& p : pts) {
      const Vec3 d = p - a;
      c += (d - d.dot(dir) * dir).squaredNorm() <= tol2;
    }
    return c;
  };
  Vec3 best_a = pts.front(), best_dir = (pts.back() - pts.front()).normalized();
  std::size_t best = count_inliers(best_a, best_dir);
  for (int it = 0; it < cfg.line_ransac_iterations; ++it) {
    const std::size_t i = rng() % n, j = rng() % n;
    if (i == j) continue;
    const Vec3 dir = (pts[j] - pts[i]).normalized();
    const std::size_t c = count_inliers(pts[i], dir);
    if (c > best) {
      best = c;
      best_a = pts[i];
      best_dir = dir;
    }
  }
  std::vector<Vec3> in;
  for (const auto& p : pts) {
    const Vec3 d = p - best_a;
    if ((d - d.dot(best_dir) * best_dir).squaredNorm() <= tol2) in.push_back(p);
  }
  if (in.size() < 2) return best_dir;
  Vec3 dir = principal_axis<3>(in).first.normalized();
  if (dir.dot(best_dir) < 0) dir = -dir;
  return dir;
}

/// Center, direction and projected extent.
inline Cluster make_cluster(PointCloud pts, const ClusterConfig& cfg, const Vec3* fallback_dir = nullptr) {
  Cluster c;
  c.center = calc_center_bb(pts);
  try {
    c.raw_direction = line_ransac(pts, cfg);
  } catch (const EstimationError&) {
    c.raw_direction = fallback_dir ? *fallback_dir : Vec3::UnitX();
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : pts.points) {
    const double t = c.raw_direction.dot(p.pos() - c.center);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  c.length = hi - lo;
  c.points = std::move(pts);
  return c;
}

struct DbscanResult {
  std::vector<Cluster> clusters;
  PointCloud noise;
};

inline DbscanResult dbscan(const PointCloud& cloud, const ClusterConfig& cfg) {
  const auto lab = dbscan_labels(cloud.positions(), cfg.dbscan_eps, cfg.dbscan_min_pts);
  std::vector<PointCloud> groups(static_cast<std::size_t>(lab.cluster_count));
  DbscanResult out;
  out.noise.frame = cloud.frame;
  for (auto& g : groups) g.frame = cloud.frame;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (lab.labels[i] < 0)
      out.noise.points.push_back(cloud.points[i]);
    else
      groups[static_cast<std::size_t>(lab.labels[i])].points.push_back(cloud.points[i]);
  }
  for (auto& g : groups) out.clusters.push_back(make_cluster(std::move(g), cfg));
  return out;
}

/// Clusters longer than split_threshold are cut into n = ceil(length/slice_length)
/// slices of uniform extent along the raw direction.
inline std::vector<Cluster> split_cluster(const Cluster& c, const ClusterConfig& cfg) {
  if (c.length <= cfg.split_threshold) return {c};
  const auto n = static_cast<std::size_t>(std::ceil(c.length / cfg.slice_length - 1e-9));
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& p : c.points.points) lo = std::min(lo, c.raw_direction.dot(p.pos() - c.center));
  const double width = c.length / static_cast<double>(n);
  std::vector<PointCloud> slices(n);
  for (auto& s : slices) s.frame = c.points.frame;
  for (const auto& p : c.points.points) {
    const double t = c.raw_direction.dot(p.pos() - c.center) - lo;
    const auto k = std::min(n - 1, static_cast<std::size_t>(std::max(0.0, std::floor(t / width))));
    slices[k].points.push_back(p);
  }
  std::vector<Cluster> out;
  out.reserve(n);
  for (auto& s : slices)
    if (!s.empty()) out.push_back(make_cluster(std::move(s), cfg, &c.raw_direction));
  return out;
}

/// Flips each direction so it points away from the origin.
inline void unify_direction(std::vector<Cluster>& clusters, const Vec3& origin = Vec3::Zero()) {
  for (auto& c : clusters)
    if (c.raw_direction.dot(c.center - origin) < 0) c.raw_direction = -c.raw_direction;
}

/// DBSCAN, split of long clusters, centers/directions, sign unification.
inline std::vector<Cluster> build_clusters(const PointCloud& cloud, const ClusterConfig& cfg,
                                           std::size_t* noise_count = nullptr, unsigned threads = 1) {
  const auto pts = cloud.positions();
  const auto lab = dbscan_labels(pts, cfg.dbscan_eps, cfg.dbscan_min_pts);
  std::vector<PointCloud> groups(static_cast<std::size_t>(lab.cluster_count));
  for (auto& g : groups) g.frame = cloud.frame;
  std::size_t noise = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (lab.labels[i] < 0) {
      ++noise;
      continue;
    }
    groups[static_cast<std::size_t>(lab.labels[i])].points.push_back(cloud.points[i]);
  }
  if (noise_count) *noise_count = noise;

  std::vector<std::vector<Cluster>> per_group(groups.size());
  parallel_for(groups.size(), threads, [&](std::size_t g) {
    per_group[g] = split_cluster(make_cluster(std::move(groups[g]), cfg), cfg);
  });
  std::vector<Cluster> out;
  for (auto& v : per_group)
    for (auto& c : v) out.push_back(std::move(c));
  unify_direction(out);
  return out;
}

}  // namespace clustering
}  // namespace odrgen
